//! `R_n = sum_j U_j - Delta` along one walk in d = 4.

use latcap::capacity::{decompose, equal_blocks, SolverOptions};
use latcap::walks::simulate_path;
use latcap::{GreenTable, SeedPolicy};

fn main() -> latcap::Result<()> {
    let table = GreenTable::new(4)?;
    let n = 4096;
    let path = simulate_path(4, n, SeedPolicy::new(3))?;
    for k in [1, 2, 4, 8, 16] {
        let rep = decompose(
            &path,
            &equal_blocks(n, k),
            &table,
            &SolverOptions::with_tol(1e-9),
        )?;
        let sum_u: f64 = rep.blocks.iter().sum();
        println!(
            "k = {k:>2}: R = {:.4}, sum U = {sum_u:.4}, Delta = {:.4}, residual {:.1e}, consistent {}",
            rep.total,
            rep.delta,
            rep.identity_residual(),
            rep.consistent()
        );
    }
    Ok(())
}
