//! Range size and range capacity of simple random walks.

use latcap::capacity::{prefix_capacities, SolverOptions};
use latcap::walks::simulate_path;
use latcap::{GreenTable, SeedPolicy};

fn main() -> latcap::Result<()> {
    let n = 1 << 12;
    let grid = [256usize, 512, 1024, 2048, 4096];
    for d in 3..=5 {
        let table = GreenTable::new(d)?;
        let path = simulate_path(d, n, SeedPolicy::new(7))?;
        let (range, times) = path.range_with_times(0, n)?;
        let sizes: Vec<usize> = grid
            .iter()
            .map(|&j| times.partition_point(|&t| t <= j))
            .collect();
        let caps = prefix_capacities(&range.set, &sizes, &table, &SolverOptions::with_tol(1e-8))?;
        println!("d = {d}: max |S_i| = {:.1}", path.max_norm()?);
        for ((j, k), c) in grid.iter().zip(&sizes).zip(&caps) {
            println!(
                "  n = {j:>4}: |range| = {k:>4}, R_n = {:>8.3}, R_n/n = {:.4}",
                c.value,
                c.value / *j as f64
            );
        }
    }
    Ok(())
}
