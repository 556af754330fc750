//! Synthetic datasets, experiment runners and report plumbing for the
//! coin-flipping classifier crates.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::run_experiment;
pub use report::{CurveTable, ExperimentReport};
