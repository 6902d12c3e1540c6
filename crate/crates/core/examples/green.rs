//! Green's function values near the origin and in the far field.

use latcap::green::{green_asymptotic, GreenTable};

fn main() -> latcap::Result<()> {
    for d in 3..=5 {
        let table = GreenTable::new(d)?;
        println!("d = {d}");
        for r in [0i64, 1, 2, 5, 10, 30, 100] {
            let mut x = vec![0; d];
            x[0] = r;
            let g = table.green(&x)?;
            let asym = if r > 0 {
                format!("{:.9}", green_asymptotic(d, &x)?)
            } else {
                "-".into()
            };
            println!(
                "  G({r:>3} e1) = {:.9} +- {:.1e}  {:?}  leading term {asym}",
                g.value, g.error_bound, g.regime
            );
        }
    }
    Ok(())
}
