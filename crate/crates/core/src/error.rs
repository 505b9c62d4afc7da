//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller-supplied argument is structurally invalid (wrong length,
    /// out-of-range index, empty input, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// A parameter value lies outside the mathematical domain of the
    /// requested quantity (non-positive intercept, divergent series, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data carries no usable signal (e.g. an all-zero sample).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A matrix inversion was refused because the condition number exceeds
    /// the trust limit.
    #[error("singular matrix: condition number {cond:.3e} exceeds limit {limit:.1e}")]
    Singular { cond: f64, limit: f64 },

    /// A (co)variance entry that must be non-negative came out negative,
    /// which signals a broken positive-semidefinite computation upstream.
    #[error("negative variance: {0}")]
    NegativeVariance(String),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }
}
