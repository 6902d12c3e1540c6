//! Capacity from Dirichlet problems on growing boxes, extrapolated, next to
//! the Green-matrix solve.

use latcap::capacity::{box_capacity, cap_exact, dirichlet_oracle_with, DirichletOptions};
use latcap::{GreenTable, PointSet};

fn main() -> latcap::Result<()> {
    let set = PointSet::from_points(3, [[0, 0, 0], [1, 0, 0], [0, 2, 1], [3, 1, 0]])?;
    let opts = DirichletOptions::for_set(&set);
    for &l in &opts.half_widths {
        let b = box_capacity(&set, &set.center(), l, opts.tol, opts.max_sweeps)?;
        println!("box half-width {l:>2}: Cap_L = {:.8}", b.value);
    }
    let oracle = dirichlet_oracle_with(&set, &opts)?;
    let exact = cap_exact(&set, &GreenTable::new(3)?, 1e-12)?.0;
    println!(
        "extrapolated {:.8} (+- {:.0e}), exact {:.8}",
        oracle.value, oracle.error, exact.value
    );
    Ok(())
}
