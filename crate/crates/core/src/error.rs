use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is not supported here (need d >= {1})")]
    Dimension(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index out of bounds: {0}")]
    Index(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coordinate {value} does not fit the {bits}-bit packed encoding")]
    CoordinateOverflow { value: i64, bits: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Green matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("set of size {size} exceeds the capacity budget {budget}")]
    Budget { size: usize, budget: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for numerical failures (as opposed to usage errors).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NoConvergence { .. }
                | Error::Domain(_)
                | Error::Budget { .. }
                | Error::CoordinateOverflow { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
