//! Cylinders and ball chains with their capacities.

use latcap::capacity::{cap_bounds, cap_exact};
use latcap::shapes::{
    ball_chain, collinear_centers, cylinder, cylinder_radius, outer_shell, ShapeSpec,
};
use latcap::GreenTable;

fn main() -> latcap::Result<()> {
    let table = GreenTable::new(3)?;
    for m in [16u64, 32, 64] {
        let r = cylinder_radius(m);
        for l in [1u64, 4] {
            let c = cylinder(m, l, r)?;
            let (lo, hi) = cap_bounds(&c, &table)?;
            let cap = cap_exact(&outer_shell(&c), &table, 1e-8)?.0.value;
            println!("cylinder m = {m:>3}, l = {l}, r = {r:>2}: {:>6} points, Cap = {cap:.3}, bounds [{lo:.3}, {hi:.3}]", c.len());
        }
    }
    let centers = collinear_centers(3, 6, 8);
    let chain = ball_chain(&centers, 6.0)?;
    println!(
        "chain of 8 balls of radius 6: {} points, Cap = {:.3}",
        chain.len(),
        cap_exact(&outer_shell(&chain), &table, 1e-8)?.0.value
    );
    let spec: ShapeSpec = "ball:d=4,r=3,c=1;0;0;0".parse()?;
    println!("{spec}: {} points", spec.build()?.len());
    Ok(())
}
