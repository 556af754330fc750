//! Ball and tangent classifier experiments: random accuracy across sample
//! counts, delta curves, and the success-probability curve over radius.

use cfnn_core::amplify::{
    delta_curve, empirical_random_accuracy, estimate_probs, StochasticClassifier,
};
use cfnn_core::ball::{analytic_p1_ball, analytic_p1_tangent, BallParams, TangentParams};
use cfnn_core::numerics::make_rng;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::dataset::{gen_dataset, DatasetParams};
use crate::error::Result;
use crate::experiments::{linspace, radius_point};
use crate::report::{CurveTable, Deadline, ExperimentReport};

const P1_GRID_POINTS: usize = 41;

enum Classifier {
    Ball(BallParams),
    Tangent(TangentParams),
}

impl Classifier {
    fn as_stochastic(&self) -> &dyn StochasticClassifier {
        match self {
            Classifier::Ball(p) => p,
            Classifier::Tangent(p) => p,
        }
    }

    fn analytic_p1(&self, r: f64) -> cfnn_core::Result<f64> {
        match self {
            Classifier::Ball(p) => analytic_p1_ball(p, r),
            Classifier::Tangent(p) => analytic_p1_tangent(p, r),
        }
    }
}

pub fn run_ball_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let deadline = Deadline::new(cfg.max_seconds);
    let mut report = ExperimentReport::new(cfg);

    let tangent = cfg.kind == ExperimentKind::Tangent;
    let dim = if tangent { 2 } else { cfg.dim };
    let classifier = if tangent {
        Classifier::Tangent(TangentParams::new(cfg.radius, cfg.alpha)?)
    } else {
        Classifier::Ball(BallParams::new(dim, cfg.radius, cfg.alpha)?)
    };
    let clf = classifier.as_stochastic();

    let ds_params = DatasetParams {
        dim,
        radius: cfg.radius,
        intervals: cfg.intervals.clone(),
        noise: 0.1,
    };
    let data = gen_dataset("shell", cfg.points, cfg.seed, &ds_params)?;
    let root = make_rng(cfg.seed);

    // random accuracy across the requested sample counts
    let mut ra_curve = CurveTable::new("ra_vs_n", &["n", "ra"]);
    let mut n_values = cfg.n_test.clone();
    if !n_values.contains(&cfg.samples) {
        n_values.push(cfg.samples);
    }
    n_values.sort_unstable();
    let mut last_ra = 0.0;
    for (i, &n) in n_values.iter().enumerate() {
        let ra = empirical_random_accuracy(clf, &data, n, &root.split(100 + i as u64))?;
        ra_curve.push_row(vec![n as f64, ra])?;
        report.metric(format!("ra_n{n}"), ra)?;
        last_ra = ra;
        deadline.check()?;
    }
    report.metric("ra", last_ra)?;
    report.curves.push(ra_curve);

    // delta curve on the same streams as the largest-n accuracy pass
    let max_i = n_values.len() - 1;
    let dc = delta_curve(clf, &data, n_values[max_i], &root.split(100 + max_i as u64))?;
    report.metric("delta_positive_fraction", dc.positive_fraction)?;
    let mut delta_table = CurveTable::new("delta", &["rank", "delta"]);
    for (rank, &d) in dc.deltas.iter().enumerate() {
        delta_table.push_row(vec![rank as f64, d])?;
    }
    report.curves.push(delta_table);
    deadline.check()?;

    // analytic and empirical success probability over a radius grid
    let lo = cfg.intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
    let hi = cfg
        .intervals
        .iter()
        .map(|i| i.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p1_curve = CurveTable::new("p1_grid", &["radius", "p1_analytic", "p1_empirical", "n"]);
    let mut crossing = (f64::INFINITY, 0.0);
    for (i, r) in linspace(lo, hi, P1_GRID_POINTS).into_iter().enumerate() {
        let x = radius_point(dim, r);
        let est = estimate_probs(clf, &x, cfg.samples, &root.split(300 + i as u64))?;
        let p1 = classifier.analytic_p1(r)?;
        p1_curve.push_row(vec![r, p1, est.p_hat[1], cfg.samples as f64])?;
        let gap = (p1 - 0.5).abs();
        if gap < crossing.0 {
            crossing = (gap, r);
        }
        deadline.check()?;
    }
    report.curves.push(p1_curve);
    report.metric("p1_crossing_radius", crossing.1)?;
    report.metric("runtime_seconds", deadline.elapsed_seconds())?;
    Ok(report)
}
