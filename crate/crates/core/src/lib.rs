//! Discrete potential theory on Z^d, d >= 3: simple random walk ranges,
//! lattice Green's functions, Newtonian capacity and the experiments built
//! on them.

pub mod capacity;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod green;
pub mod lattice;
pub mod linalg;
pub mod numeric;
pub mod rng;
pub mod scales;
pub mod shapes;
pub mod stats;
pub mod walks;

pub use error::{Error, Result};
pub use green::{GreenConfig, GreenTable, GreenValue, Regime};
pub use lattice::{LatticePoint, PointSet};
pub use rng::SeedPolicy;
pub use walks::{simulate_path, RangeSet, WalkPath};
