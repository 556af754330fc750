//! Experiment configuration: one flat struct, echoed in every report so a
//! run can be reproduced from its own output.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Ball,
    Tangent,
    Cone,
    Mse,
    Train,
    Sweep,
    Gtilde,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Ball => "ball",
            ExperimentKind::Tangent => "tangent",
            ExperimentKind::Cone => "cone",
            ExperimentKind::Mse => "mse",
            ExperimentKind::Train => "train",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Gtilde => "gtilde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dim: usize,
    pub radius: f64,
    pub alpha: f64,
    /// Samples per majority / per grid point (kind-dependent).
    pub samples: u64,
    /// Dataset size or evaluation point count.
    pub points: usize,
    /// Shell half-width for the MSE bound.
    pub phi: f64,
    /// Target MSE.
    pub eps: f64,
    pub target_fn: String,
    pub lipschitz: f64,
    pub zeta_scale: f64,
    pub dataset: String,
    pub arch: String,
    pub n_train: u64,
    pub n_test: Vec<u64>,
    pub epochs: usize,
    pub repeats: u64,
    pub seed: u64,
    /// Radius intervals for shell sampling / the MSE input distribution.
    pub intervals: Vec<(f64, f64)>,
    /// Shells `(a_j, b_j, eps_j)` for the gtilde combiner.
    pub shells: Vec<(f64, f64, i8)>,
    /// Wall-clock cap; exceeding it aborts the run loudly.
    pub max_seconds: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Ball,
            dim: 10,
            radius: 1.0,
            alpha: 0.75,
            samples: 1501,
            points: 1000,
            phi: 0.2,
            eps: 0.1,
            target_fn: "sin".into(),
            lipschitz: 1.0,
            zeta_scale: 2.0,
            dataset: "circles".into(),
            arch: "hypernet".into(),
            n_train: 25,
            n_test: vec![1, 9, 101],
            epochs: 200,
            repeats: 5,
            seed: 42,
            intervals: vec![(0.2, 0.8), (1.2, 3.0)],
            shells: vec![(1.0, 2.0, 1)],
            max_seconds: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            ..ExperimentConfig::default()
        };
        match kind {
            ExperimentKind::Ball | ExperimentKind::Tangent => {}
            ExperimentKind::Cone => {
                cfg.samples = 20_001;
                cfg.points = 200;
            }
            ExperimentKind::Mse => {
                cfg.points = 2000;
            }
            ExperimentKind::Train => {}
            ExperimentKind::Sweep => {
                cfg.arch = "dropout".into();
                cfg.n_train = 9;
                cfg.n_test = vec![1, 9, 101, 501];
            }
            ExperimentKind::Gtilde => {
                cfg.samples = 5001;
                cfg.points = 57;
                cfg.dim = 3;
            }
        }
        cfg
    }

    /// Validate every field against the owning module's preconditions.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.dim == 0 {
            return fail("dim must be >= 1".into());
        }
        if !(self.radius > 0.0) {
            return fail(format!("radius {} must be positive", self.radius));
        }
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return fail(format!("alpha {} must lie in (1/2, 1)", self.alpha));
        }
        if self.samples == 0 {
            return fail("samples must be >= 1".into());
        }
        if self.points == 0 {
            return fail("points must be >= 1".into());
        }
        if !(self.phi > 0.0 && self.phi < self.radius) {
            return fail(format!(
                "phi {} must lie in (0, radius={})",
                self.phi, self.radius
            ));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return fail(format!("eps {} must lie in (0, 1)", self.eps));
        }
        if self.zeta_scale <= 0.0 {
            return fail("zeta-scale must be positive".into());
        }
        if self.lipschitz <= 0.0 {
            return fail("lipschitz must be positive".into());
        }
        if self.n_train == 0 {
            return fail("n-train must be >= 1".into());
        }
        if self.n_test.is_empty() || self.n_test.contains(&0) {
            return fail("n-test needs at least one positive entry".into());
        }
        if self.repeats == 0 {
            return fail("repeats must be >= 1".into());
        }
        if !matches!(self.arch.as_str(), "hypernet" | "dropout" | "plain") {
            return fail(format!(
                "arch {:?} must be hypernet|dropout|plain",
                self.arch
            ));
        }
        if matches!(self.kind, ExperimentKind::Gtilde) {
            if self.shells.is_empty() {
                return fail("gtilde needs at least one shell".into());
            }
            if self.samples % 2 == 0 {
                return fail("gtilde samples must be odd".into());
            }
        }
        if let Some(cap) = self.max_seconds {
            if cap <= 0.0 {
                return fail("max-seconds must be positive".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_kind() {
        use ExperimentKind::*;
        for kind in [Ball, Tangent, Cone, Mse, Train, Sweep, Gtilde] {
            ExperimentConfig::for_kind(kind).validate().unwrap();
        }
    }

    #[test]
    fn bad_fields_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.alpha = 0.5;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.phi = 1.5;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.arch = "transformer".into();
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::for_kind(ExperimentKind::Gtilde);
        cfg.samples = 500;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::for_kind(ExperimentKind::Cone);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
