//! Cone separation experiment: per-point agreement probability on a grid
//! off the graph, neutrality on the graph, and slice classification at
//! height zero.

use cfnn_core::amplify::empirical_random_accuracy;
use cfnn_core::ball::sign;
use cfnn_core::cone::{sample_cone_classifier, ConeDistribution, SliceClassifier, TargetFn};
use cfnn_core::numerics::make_rng;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::linspace;
use crate::report::{CurveTable, Deadline, ExperimentReport};

const X_RANGE: (f64, f64) = (-3.0, 3.0);
const Y_RANGE: (f64, f64) = (-1.9, 1.9);
const MARGIN: f64 = 0.25;
const ON_GRAPH_POINTS: usize = 50;
const SLICE_SAMPLES: u64 = 2001;

pub fn run_cone_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let target = TargetFn::from_name(&cfg.target_fn)?;
    if (cfg.lipschitz - target.lipschitz()).abs() > 1e-12 {
        return Err(HarnessError::Config(format!(
            "target {} ships with K = {}, got {}",
            target.name(),
            target.lipschitz(),
            cfg.lipschitz
        )));
    }

    let deadline = Deadline::new(cfg.max_seconds);
    let mut report = ExperimentReport::new(cfg);
    let root = make_rng(cfg.seed);
    let cd = ConeDistribution::for_target(target, cfg.zeta_scale, &mut root.split(0))?;

    // off-graph grid: points with |y - f(x)| >= MARGIN, thinned to cfg.points
    let nx = (cfg.points as f64).sqrt().ceil() as usize + 4;
    let ny = nx;
    let mut candidates = Vec::new();
    for x in linspace(X_RANGE.0, X_RANGE.1, nx) {
        for y in linspace(Y_RANGE.0, Y_RANGE.1, ny) {
            if (y - target.eval(x)).abs() >= MARGIN {
                candidates.push((x, y));
            }
        }
    }
    if candidates.len() < cfg.points {
        return Err(HarnessError::Config(format!(
            "only {} grid points clear the margin, {} requested",
            candidates.len(),
            cfg.points
        )));
    }
    let stride = candidates.len() as f64 / cfg.points as f64;
    let grid: Vec<(f64, f64)> = (0..cfg.points)
        .map(|k| candidates[(k as f64 * stride) as usize])
        .collect();

    let n = cfg.samples;
    let mut grid_curve = CurveTable::new("cone_grid", &["x", "y", "pr_agree", "n", "inside_margin"]);
    let mut significant = 0usize;
    for (k, &(x, y)) in grid.iter().enumerate() {
        let truth = sign(y - target.eval(x));
        let point_rng = root.split(500 + k as u64);
        let mut agree = 0u64;
        for j in 0..n {
            let mut s = point_rng.split(j);
            if sample_cone_classifier(&cd, &mut s).label(&[x, y])? == truth {
                agree += 1;
            }
        }
        let pr = agree as f64 / n as f64;
        let sigma = (pr * (1.0 - pr) / n as f64).sqrt();
        if pr - 0.5 >= 4.0 * sigma {
            significant += 1;
        }
        grid_curve.push_row(vec![x, y, pr, n as f64, (y - target.eval(x)).abs()])?;
        deadline.check()?;
    }
    report.metric(
        "offgraph_significant_fraction",
        significant as f64 / grid.len() as f64,
    )?;
    report.curves.push(grid_curve);

    // on-graph neutrality
    let mut on_curve = CurveTable::new("on_graph", &["x", "pr_plus", "n"]);
    let mut within = 0usize;
    for (k, x) in linspace(X_RANGE.0, X_RANGE.1, ON_GRAPH_POINTS)
        .into_iter()
        .enumerate()
    {
        let q = [x, target.eval(x)];
        let point_rng = root.split(9_000 + k as u64);
        let mut plus = 0u64;
        for j in 0..n {
            let mut s = point_rng.split(j);
            if sample_cone_classifier(&cd, &mut s).label(&q)? == 1 {
                plus += 1;
            }
        }
        let pr = plus as f64 / n as f64;
        if (pr - 0.5).abs() <= 4.0 * (0.25 / n as f64).sqrt() {
            within += 1;
        }
        on_curve.push_row(vec![x, pr, n as f64])?;
        deadline.check()?;
    }
    report.metric(
        "ongraph_within_band_fraction",
        within as f64 / ON_GRAPH_POINTS as f64,
    )?;
    report.curves.push(on_curve);

    // slice classification at height zero on x with |f(x)| >= MARGIN
    let slice_xs: Vec<f64> = linspace(X_RANGE.0, X_RANGE.1, 121)
        .into_iter()
        .filter(|&x| target.eval(x).abs() >= MARGIN)
        .collect();
    let slice_data: Vec<(Vec<f64>, usize)> = slice_xs
        .iter()
        .map(|&x| (vec![x], usize::from(sign(target.eval(x)) == 1)))
        .collect();
    let slice_ra = empirical_random_accuracy(
        &SliceClassifier(&cd),
        &slice_data,
        SLICE_SAMPLES,
        &root.split(20_000),
    )?;
    report.metric("slice_ra", slice_ra)?;
    report.metric("slice_points", slice_data.len() as f64)?;
    let mut slice_curve = CurveTable::new("slice", &["x", "f_sign"]);
    for (x, y) in &slice_data {
        slice_curve.push_row(vec![x[0], if *y == 1 { 1.0 } else { -1.0 }])?;
    }
    report.curves.push(slice_curve);

    report.metric("runtime_seconds", deadline.elapsed_seconds())?;
    Ok(report)
}
