use thiserror::Error;

use crate::N_MAX;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("a sum needs at least one component")]
    Empty,

    #[error("half-width must be strictly positive, got {0}")]
    NonPositiveHalfWidth(String),

    #[error("{n} components exceed the vertex-enumeration limit of {N_MAX}; for identical components use density_feller")]
    Capacity { n: usize },

    #[error("exact mode needs a finite rational input, got {0}")]
    NotRational(f64),

    #[error("probability level {0} is outside [0, 1]")]
    Domain(f64),

    #[error("oracle input has {points} lattice combinations, above the cap of {cap}")]
    OracleCapacity { points: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
