//! Harness-level errors with their CLI exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration; CLI exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// Propagated core error; validation-like kinds exit 2, divergence 3.
    #[error(transparent)]
    Core(#[from] cfnn_core::Error),

    /// Runtime failure (wall-clock cap, divergence); exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    /// CLI exit code: 2 for configuration problems, 3 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(cfnn_core::Error::Diverged(_)) => 3,
            HarnessError::Core(_) => 2,
            HarnessError::Runtime(_) | HarnessError::Io(_) | HarnessError::Json(_) => 3,
        }
    }
}
