//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Malformed input: non-finite coordinates, dimension mismatch,
    /// out-of-range parameters.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Structurally valid data that a statistic cannot be computed from
    /// (e.g. all points identical).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A matrix factorization failed even after jitter retries.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// A problem-size guard was exceeded.
    #[error("guard exceeded: {0}")]
    GuardExceeded(String),

    /// Every candidate evaluation was degenerate.
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
