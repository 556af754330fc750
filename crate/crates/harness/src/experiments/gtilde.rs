//! Two-layer combiner experiment: evaluate the shell combiner over a radius
//! grid and compare with the exact signed-indicator sum.

use cfnn_core::ball::{build_gtilde_combiner, sign};
use cfnn_core::numerics::make_rng;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiments::{linspace, radius_point};
use crate::report::{CurveTable, Deadline, ExperimentReport};

/// Relative distance from a shell surface below which the majority is too
/// close to a coin flip to compare against the exact value.
const SURFACE_MARGIN: f64 = 0.25;

pub fn run_gtilde_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let deadline = Deadline::new(cfg.max_seconds);
    let mut report = ExperimentReport::new(cfg);

    let combiner = build_gtilde_combiner(cfg.dim, &cfg.shells, cfg.alpha, cfg.samples)?;
    let exact = |r: f64| -> f64 {
        cfg.shells
            .iter()
            .map(|&(a, b, e)| {
                f64::from(e) * (f64::from(sign(r - a)) - f64::from(sign(r - b)))
            })
            .sum()
    };
    let surface_margin = |r: f64| -> f64 {
        cfg.shells
            .iter()
            .flat_map(|&(a, b, _)| [(r - a).abs() / a, (r - b).abs() / b])
            .fold(f64::INFINITY, f64::min)
    };

    let r_max = cfg
        .shells
        .iter()
        .flat_map(|&(a, b, _)| [a, b])
        .fold(0.0f64, f64::max)
        * 1.5;
    let root = make_rng(cfg.seed);
    let mut curve = CurveTable::new("gtilde", &["radius", "gtilde", "exact", "surface_margin"]);
    let mut off_surface = 0usize;
    let mut agree = 0usize;
    for (i, r) in linspace(0.05, r_max, cfg.points).into_iter().enumerate() {
        let x = radius_point(cfg.dim, r);
        let value = combiner.eval(&x, &root.split(700 + i as u64))?;
        let expected = exact(r);
        let margin = surface_margin(r);
        if margin >= SURFACE_MARGIN {
            off_surface += 1;
            if (value - expected).abs() < 1e-12 {
                agree += 1;
            }
        }
        curve.push_row(vec![r, value, expected, margin])?;
        deadline.check()?;
    }
    report.curves.push(curve);
    report.metric("off_surface_points", off_surface as f64)?;
    report.metric(
        "agree_fraction_off_surface",
        agree as f64 / off_surface.max(1) as f64,
    )?;
    report.metric("samples_per_neuron", combiner.samples_per_neuron() as f64)?;
    report.metric("runtime_seconds", deadline.elapsed_seconds())?;
    Ok(report)
}
