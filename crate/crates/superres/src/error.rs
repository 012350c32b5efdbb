//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("derivative order {requested} exceeds the kernel cap {cap}")]
    OrderCapExceeded { requested: u32, cap: u32 },

    #[error("point {point:?} lies outside the kernel domain: {reason}")]
    OutOfDomain { point: Vec<f64>, reason: String },

    #[error("duplicate spike positions at index {0}")]
    DuplicateSpikes(usize),

    #[error("linear system is numerically singular: {0}")]
    SingularSystem(String),

    #[error("Hermite-Vandermonde matrix is rank deficient (rank {rank}, expected {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("kernel diagonal is not positive at {point:?}")]
    NonPositiveDiagonal { point: Vec<f64> },

    #[error("basis violates the closed-form structural hypothesis: {0}")]
    StructuralHypothesis(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
