//! Majority-vote MSE experiment: compute the sample-size bound for a target
//! error, then measure the empirical indicator-MSE against it.

use cfnn_core::amplify::{empirical_mse, MseConvention};
use cfnn_core::ball::{epsilon_p, mse_bound_samples, BallParams};
use cfnn_core::numerics::{make_rng, RngStream};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::l2_norm;
use crate::report::{Deadline, ExperimentReport};

/// Radius sampler matching the shell dataset's input distribution.
pub(crate) fn shell_sampler(
    dim: usize,
    intervals: Vec<(f64, f64)>,
) -> impl Fn(&mut RngStream) -> Vec<f64> {
    let total_len: f64 = intervals.iter().map(|(lo, hi)| hi - lo).sum();
    move |rng: &mut RngStream| {
        let mut pick = rng.next_f64() * total_len;
        let mut r = intervals[0].0;
        for &(lo, hi) in &intervals {
            let len = hi - lo;
            if pick <= len {
                r = lo + pick;
                break;
            }
            pick -= len;
        }
        let mut x: Vec<f64> = (0..dim).map(|_| rng.next_std_normal()).collect();
        let norm = l2_norm(&x);
        for v in &mut x {
            *v *= r / norm;
        }
        x
    }
}

pub fn run_mse_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let band = (cfg.radius - cfg.phi, cfg.radius + cfg.phi);
    for &(lo, hi) in &cfg.intervals {
        if lo < band.1 && hi > band.0 {
            return Err(HarnessError::Config(format!(
                "interval [{lo}, {hi}] intersects the excluded shell ({}, {})",
                band.0, band.1
            )));
        }
    }

    let deadline = Deadline::new(cfg.max_seconds);
    let mut report = ExperimentReport::new(cfg);

    let params = BallParams::new(cfg.dim, cfg.radius, cfg.alpha)?;
    let margin = epsilon_p(&params, cfg.phi)?;
    let n_majority = mse_bound_samples(cfg.eps, &params, cfg.phi)?;

    let radius = cfg.radius;
    let truth = move |x: &[f64]| -> i8 {
        if l2_norm(x) >= radius {
            1
        } else {
            -1
        }
    };
    let sampler = shell_sampler(cfg.dim, cfg.intervals.clone());
    let root = make_rng(cfg.seed);
    let mse = empirical_mse(
        &params,
        truth,
        sampler,
        n_majority,
        cfg.points as u64,
        &root.split(1),
        MseConvention::Indicator,
    )?;
    deadline.check()?;

    report.metric("eps", cfg.eps)?;
    report.metric("phi", cfg.phi)?;
    report.metric("eps_p", margin)?;
    report.metric("n_majority", n_majority as f64)?;
    report.metric("mse", mse)?;
    report.metric("pass", f64::from(u8::from(mse <= cfg.eps)))?;
    report.metric("pass_half", f64::from(u8::from(mse <= cfg.eps / 2.0)))?;
    report.metric("runtime_seconds", deadline.elapsed_seconds())?;
    Ok(report)
}
