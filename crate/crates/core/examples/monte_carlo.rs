//! Monte Carlo escape estimate against the exact capacity.

use latcap::capacity::{cap_exact, cap_mc, McOptions};
use latcap::shapes::ball;
use latcap::{GreenTable, SeedPolicy};

fn main() -> latcap::Result<()> {
    for d in [3, 4] {
        let table = GreenTable::new(d)?;
        let mut c = vec![0; d];
        c[0] = 1;
        let set = ball(&c, 2.0)?;
        let exact = cap_exact(&set, &table, 1e-10)?.0.value;
        for (kappa, extrapolate) in [(8.0, false), (8.0, true), (32.0, false)] {
            let opts = McOptions {
                kappa,
                replicas: 4000,
                seed: SeedPolicy::new(1),
                extrapolate,
            };
            let mc = cap_mc(&set, &table, &opts)?;
            println!(
                "d = {d}, kappa = {kappa:>4}, extrapolate = {extrapolate:<5}: {:.4} +- {:.4} (bias <= {:.4}), exact {exact:.4}",
                mc.value,
                mc.error,
                mc.bias_bound.unwrap_or(0.0)
            );
        }
    }
    Ok(())
}
