//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dimension argument was zero or otherwise unusable.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// The coin probability must satisfy 1/2 < alpha < 1.
    #[error("degenerate alpha {0}: need 1/2 < alpha < 1")]
    DegenerateAlpha(f64),

    /// Two containers that must agree in shape did not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A network description contained a directed cycle.
    #[error("network graph is cyclic")]
    CyclicGraph,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
