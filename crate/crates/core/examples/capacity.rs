//! Exact capacity of a ball with its equilibrium measure and the
//! Green-sum bounds.

use latcap::capacity::{cap_bounds, cap_exact, cap_union_bound};
use latcap::shapes::ball;
use latcap::GreenTable;

fn main() -> latcap::Result<()> {
    let table = GreenTable::new(3)?;
    for r in [1.0, 2.0, 4.0, 6.0] {
        let set = ball(&[0, 0, 0], r)?;
        let (est, q) = cap_exact(&set, &table, 1e-10)?;
        let (lo, hi) = cap_bounds(&set, &table)?;
        let qmax = q.q.iter().cloned().fold(0.0, f64::max);
        println!(
            "r = {r}: |A| = {:>4}, Cap = {:.8} (+- {:.0e}, {}), bounds [{lo:.4}, {hi:.4}], max q = {qmax:.4}",
            set.len(),
            est.value,
            est.error,
            est.method.as_str()
        );
    }
    let a = ball(&[0, 0, 0], 3.0)?;
    let b = ball(&[10, 0, 0], 3.0)?;
    let (bound, cb) = cap_union_bound(&a, &b, &table, 1e-10)?;
    let (union, _) = cap_exact(&a.union(&b)?, &table, 1e-10)?;
    println!(
        "two balls: Cap(A u B) = {:.6} <= {bound:.6} (Cap(B) = {:.6})",
        union.value, cb.value
    );
    Ok(())
}
