//! Experiment runners. Every runner validates its config, derives all
//! randomness from the config seed, and returns a report that reproduces the
//! run bit-for-bit when fed back in.

mod ball;
mod cone;
mod gtilde;
mod mse;
mod train;

pub use ball::run_ball_experiment;
pub use cone::run_cone_experiment;
pub use gtilde::run_gtilde_experiment;
pub use mse::run_mse_experiment;
pub use train::{run_sweep, run_train_experiment};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::report::ExperimentReport;

/// Dispatch on the config's experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.kind {
        ExperimentKind::Ball | ExperimentKind::Tangent => run_ball_experiment(cfg),
        ExperimentKind::Cone => run_cone_experiment(cfg),
        ExperimentKind::Mse => run_mse_experiment(cfg),
        ExperimentKind::Train => run_train_experiment(cfg),
        ExperimentKind::Sweep => run_sweep(cfg),
        ExperimentKind::Gtilde => run_gtilde_experiment(cfg),
    }
}

pub(crate) fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A point at the given radius along the first axis; the classifiers under
/// test are rotation invariant in distribution.
pub(crate) fn radius_point(dim: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    x[0] = r;
    x
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
