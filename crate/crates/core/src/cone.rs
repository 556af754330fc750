//! Cone-classifier distributions that separate Lipschitz functions in
//! probability.
//!
//! An L1-cone of slope `K` at apex `p` in `R^{d+1}` is the set where
//! `K * ||x_{1..d} - p_{1..d}||_1 <= |x_{d+1} - p_{d+1}|`. Sampling apexes on
//! the graph of a K-Lipschitz function `f'` and answering "above or below the
//! graph?" through the cone gives the right answer with probability 1 inside
//! the cone and 1/2 outside, so the marginal success probability exceeds 1/2
//! everywhere off the graph. Slicing at height 0 turns the separator into a
//! classifier for `sgn(f')`.
//!
//! Output convention: a sample labels a query `+1` for "above the graph" and
//! `-1` for "below". For d = 1 the sample is one of the two boundary lines of
//! the cone; for d >= 2 there is no hyperplane with the same agreement
//! pattern, so the sample is the cone-membership labeler paired with a fair
//! orientation coin, which reproduces the same per-query output distribution.

use crate::amplify::StochasticClassifier;
use crate::ball::{sign, Provenance, SampledLinear};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Membership in the L1-cone of slope `k` at apex `p`; the boundary counts
/// as inside. `p` and `q` live in `R^{d+1}`.
pub fn cone_contains(p: &[f64], k: f64, q: &[f64]) -> Result<bool> {
    if p.len() != q.len() {
        return Err(Error::shape(format!(
            "apex dimension {} vs query dimension {}",
            p.len(),
            q.len()
        )));
    }
    if p.len() < 2 {
        return Err(Error::InvalidDimension(
            "cone points need at least 2 coordinates".into(),
        ));
    }
    if k <= 0.0 {
        return Err(Error::domain(format!("cone slope {k} must be positive")));
    }
    let d = p.len() - 1;
    let base: f64 = (0..d).map(|i| (q[i] - p[i]).abs()).sum();
    Ok(k * base <= (q[d] - p[d]).abs())
}

/// One of the two slope-`K` lines through a 2-D apex, chosen with equal
/// probability. Labels `+1` above the line.
pub fn sample_hp(p: [f64; 2], k: f64, rng: &mut RngStream) -> Result<SampledLinear> {
    if k <= 0.0 {
        return Err(Error::domain(format!("cone slope {k} must be positive")));
    }
    let plus = rng.next_f64() < 0.5;
    let (w, c) = if plus {
        (vec![k, 1.0], k * p[0] + p[1])
    } else {
        (vec![-k, 1.0], -k * p[0] + p[1])
    };
    Ok(SampledLinear {
        w,
        c,
        provenance: Provenance::ConeSheet { plus },
    })
}

/// A target function for the cone construction, with its exact Lipschitz
/// constant. Selectable by name in the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetFn {
    /// f'(x) = 0
    Zero,
    /// f'(x) = x
    Linear,
    /// f'(x) = sin(x)
    Sin,
    /// Triangle wave of period 4 and unit slope: zero at even integers.
    AbsSaw,
}

impl TargetFn {
    pub fn from_name(name: &str) -> Result<TargetFn> {
        match name {
            "zero" => Ok(TargetFn::Zero),
            "linear" => Ok(TargetFn::Linear),
            "sin" => Ok(TargetFn::Sin),
            "abs-saw" => Ok(TargetFn::AbsSaw),
            other => Err(Error::domain(format!(
                "unknown target function {other:?}; expected zero|linear|sin|abs-saw"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetFn::Zero => "zero",
            TargetFn::Linear => "linear",
            TargetFn::Sin => "sin",
            TargetFn::AbsSaw => "abs-saw",
        }
    }

    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TargetFn::Zero => 0.0,
            TargetFn::Linear => x,
            TargetFn::Sin => x.sin(),
            TargetFn::AbsSaw => {
                let t = (x.rem_euclid(4.0)) - 2.0;
                t.abs() - 1.0
            }
        }
    }
}

/// A distribution of cone classifiers: apexes are `(t, f'(t))` with
/// `t ~ zeta`, and the surrogate `f'` must be K-Lipschitz in the L1 norm.
pub struct ConeDistribution {
    k: f64,
    dim: usize,
    f_prime: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    zeta_sampler: Box<dyn Fn(&mut RngStream) -> Vec<f64> + Send + Sync>,
}

impl ConeDistribution {
    /// Build the distribution, spot-checking the Lipschitz claim on 1000
    /// sampled pairs: `|f'(s) - f'(t)| <= K * ||s - t||_1 + 1e-9`.
    pub fn new(
        k: f64,
        dim: usize,
        f_prime: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        zeta_sampler: Box<dyn Fn(&mut RngStream) -> Vec<f64> + Send + Sync>,
        check_rng: &mut RngStream,
    ) -> Result<Self> {
        if k <= 0.0 {
            return Err(Error::domain(format!("cone slope {k} must be positive")));
        }
        if dim == 0 {
            return Err(Error::InvalidDimension("cone input dimension must be >= 1".into()));
        }
        for _ in 0..1000 {
            let s = zeta_sampler(check_rng);
            let t = zeta_sampler(check_rng);
            if s.len() != dim || t.len() != dim {
                return Err(Error::shape(format!(
                    "zeta sample dimension {} != declared {dim}",
                    s.len()
                )));
            }
            let l1: f64 = s.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum();
            let df = (f_prime(&s) - f_prime(&t)).abs();
            if df > k * l1 + 1e-9 {
                return Err(Error::domain(format!(
                    "Lipschitz spot-check failed: |df| = {df} > K * ||s-t||_1 = {}",
                    k * l1
                )));
            }
        }
        Ok(ConeDistribution {
            k,
            dim,
            f_prime,
            zeta_sampler,
        })
    }

    /// 1-D distribution for a named target with `zeta = N(0, scale^2)`.
    pub fn for_target(target: TargetFn, zeta_scale: f64, check_rng: &mut RngStream) -> Result<Self> {
        if zeta_scale <= 0.0 {
            return Err(Error::domain(format!(
                "zeta scale {zeta_scale} must be positive"
            )));
        }
        Self::new(
            target.lipschitz(),
            1,
            Box::new(move |x: &[f64]| target.eval(x[0])),
            Box::new(move |rng: &mut RngStream| vec![zeta_scale * rng.next_std_normal()]),
            check_rng,
        )
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn f_prime(&self, t: &[f64]) -> f64 {
        (self.f_prime)(t)
    }
}

/// One draw from a cone distribution: answers "above or below the graph?"
/// for queries in `R^{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeSample {
    /// d = 1: one of the two boundary lines through the apex.
    Line(SampledLinear),
    /// d >= 2: the cone-membership labeler with a fair orientation coin.
    /// Queries inside the cone get their true side relative to the apex;
    /// queries outside get `orientation`.
    Indicator {
        apex: Vec<f64>,
        k: f64,
        orientation: i8,
    },
}

impl ConeSample {
    /// Label a query point in `R^{d+1}`: `+1` above, `-1` below.
    pub fn label(&self, q: &[f64]) -> Result<i8> {
        match self {
            ConeSample::Line(line) => line.label(q),
            ConeSample::Indicator {
                apex,
                k,
                orientation,
            } => {
                if cone_contains(apex, *k, q)? {
                    Ok(sign(q[q.len() - 1] - apex[apex.len() - 1]))
                } else {
                    Ok(*orientation)
                }
            }
        }
    }
}

/// Draw one cone classifier: `t ~ zeta`, apex `(t, f'(t))`, then the line
/// pair (d = 1) or orientation-coin indicator (d >= 2).
pub fn sample_cone_classifier(cd: &ConeDistribution, rng: &mut RngStream) -> ConeSample {
    let t = (cd.zeta_sampler)(rng);
    let height = (cd.f_prime)(&t);
    if cd.dim == 1 {
        let line = sample_hp([t[0], height], cd.k, rng).expect("k validated at construction");
        ConeSample::Line(line)
    } else {
        let mut apex = t;
        apex.push(height);
        let orientation = if rng.next_f64() < 0.5 { 1 } else { -1 };
        ConeSample::Indicator {
            apex,
            k: cd.k,
            orientation,
        }
    }
}

/// One sample of the slice classifier at height 0: the marginal probability
/// of returning `sgn(f'(x))` exceeds 1/2 wherever `f'(x) != 0`.
pub fn classify_in_probability(
    cd: &ConeDistribution,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<i8> {
    if x.len() != cd.dim {
        return Err(Error::shape(format!(
            "input dimension {} != cone distribution dimension {}",
            x.len(),
            cd.dim
        )));
    }
    let mut q = x.to_vec();
    q.push(0.0);
    let side = sample_cone_classifier(cd, rng).label(&q)?;
    // "below the graph" at height 0 means f'(x) > 0.
    Ok(-side)
}

/// The slice classifier as a stochastic classifier over `R^d` inputs:
/// class 1 stands for `sgn(f'(x)) = +1`.
pub struct SliceClassifier<'a>(pub &'a ConeDistribution);

impl StochasticClassifier for SliceClassifier<'_> {
    fn class_count(&self) -> usize {
        2
    }

    fn sample_label(&self, x: &[f64], rng: &mut RngStream) -> Result<usize> {
        Ok(usize::from(classify_in_probability(self.0, x, rng)? == 1))
    }
}

/// The continuous parameter map a generator network would approximate:
/// `T(t) = K * (t_1, ..., t_d, f'(t))`.
pub fn generator_t(cd: &ConeDistribution, t: &[f64]) -> Result<Vec<f64>> {
    if t.len() != cd.dim {
        return Err(Error::shape(format!(
            "input dimension {} != cone distribution dimension {}",
            t.len(),
            cd.dim
        )));
    }
    let mut out = Vec::with_capacity(cd.dim + 1);
    for &ti in t {
        out.push(cd.k * ti);
    }
    out.push(cd.k * (cd.f_prime)(t));
    Ok(out)
}

/// Explicit weights of the two-layer rectifier network that evaluates
/// L1-cone membership.
///
/// The first layer holds a `+/-` rectifier pair per coordinate: weight `K`
/// and bias `K * p_i` for the first `d` coordinates, weight 1 and bias
/// `p_{d+1}` for the height coordinate, so the second layer's fixed signed
/// sum reproduces `|x_{d+1} - p_{d+1}| - K * ||x_{1..d} - p_{1..d}||_1`.
///
/// Counted as in the source construction the network has `2d + 1` neurons;
/// the literal unit list is `2(d+1)` rectifiers plus one sign comparator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeNetworkParams {
    apex: Vec<f64>,
    k: f64,
    /// (weight, bias) per rectifier pair, indexed by coordinate.
    pair_params: Vec<(f64, f64)>,
}

/// Build the cone network for apex `p` in `R^{d+1}` and slope `k`.
pub fn l1cone_network_params(p: &[f64], k: f64) -> Result<ConeNetworkParams> {
    if p.len() < 2 {
        return Err(Error::InvalidDimension(
            "cone apex needs at least 2 coordinates".into(),
        ));
    }
    if k <= 0.0 {
        return Err(Error::domain(format!("cone slope {k} must be positive")));
    }
    let d = p.len() - 1;
    let mut pair_params = Vec::with_capacity(d + 1);
    for &pi in p.iter().take(d) {
        pair_params.push((k, k * pi));
    }
    pair_params.push((1.0, p[d]));
    Ok(ConeNetworkParams {
        apex: p.to_vec(),
        k,
        pair_params,
    })
}

impl ConeNetworkParams {
    pub fn apex(&self) -> &[f64] {
        &self.apex
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Neuron count as the source construction counts it.
    pub fn paper_neuron_count(&self) -> usize {
        2 * (self.apex.len() - 1) + 1
    }

    /// Literal unit count: two rectifiers per coordinate plus the comparator.
    pub fn unit_count(&self) -> usize {
        2 * self.apex.len() + 1
    }
}

/// Run the cone network: `+1` iff the input is inside the cone (boundary
/// inside, via the shared `sign(0) = +1` convention).
pub fn eval_l1cone_network(params: &ConeNetworkParams, x: &[f64]) -> Result<i8> {
    if x.len() != params.apex.len() {
        return Err(Error::shape(format!(
            "input dimension {} != network dimension {}",
            x.len(),
            params.apex.len()
        )));
    }
    let d = x.len() - 1;
    let mut base_sum = 0.0;
    for i in 0..d {
        let (w, b) = params.pair_params[i];
        let plus = (w * x[i] - b).max(0.0);
        let minus = (b - w * x[i]).max(0.0);
        base_sum += plus + minus;
    }
    let (w, b) = params.pair_params[d];
    let height = (w * x[d] - b).max(0.0) + (b - w * x[d]).max(0.0);
    Ok(sign(height - base_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_rng;

    #[test]
    fn cone_contains_basics() {
        assert!(cone_contains(&[0.0, 0.0], 1.0, &[1.0, 2.0]).unwrap());
        assert!(!cone_contains(&[0.0, 0.0], 1.0, &[2.0, 1.0]).unwrap());
        assert!(cone_contains(&[0.0, 0.0], 1.0, &[0.0, 0.0]).unwrap()); // apex
        assert!(cone_contains(&[0.0, 0.0], 1.0, &[1.0, 1.0]).unwrap()); // boundary
        assert!(cone_contains(&[0.0, 0.0], 1.0, &[1.0, -2.0]).unwrap()); // lower sheet
        assert!(cone_contains(&[1.0, 2.0, 3.0], 2.0, &[1.5, 2.0, 4.5]).unwrap());
        assert!(cone_contains(&[0.0], 1.0, &[0.0, 1.0]).is_err());
        assert!(cone_contains(&[0.0, 0.0], 0.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn hp_pair_agreement_pattern() {
        // q inside the cone: both lines agree; outside: they disagree.
        let inside = [1.0, 2.0];
        let outside = [2.0, 1.0];
        let mut seen_plus = false;
        let mut seen_minus = false;
        let mut rng = make_rng(1);
        for _ in 0..100 {
            let h = sample_hp([0.0, 0.0], 1.0, &mut rng).unwrap();
            assert_eq!(h.label(&inside).unwrap(), 1);
            match h.provenance {
                Provenance::ConeSheet { plus: true } => {
                    seen_plus = true;
                    assert_eq!(h.label(&outside).unwrap(), 1);
                }
                Provenance::ConeSheet { plus: false } => {
                    seen_minus = true;
                    assert_eq!(h.label(&outside).unwrap(), -1);
                }
                _ => unreachable!(),
            }
        }
        assert!(seen_plus && seen_minus);
    }

    #[test]
    fn hp_branch_frequency_fair() {
        let mut rng = make_rng(6);
        let n = 10_000;
        let plus = (0..n)
            .filter(|_| {
                matches!(
                    sample_hp([0.0, 0.0], 1.0, &mut rng).unwrap().provenance,
                    Provenance::ConeSheet { plus: true }
                )
            })
            .count();
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.015, "frac={frac}");
    }

    #[test]
    fn indicator_and_line_encodings_agree_pointwise() {
        // For d = 1 the {h+, h-} outcome pair equals the {orientation +1, -1}
        // indicator pair on every off-boundary query.
        let apex = [0.3, -0.2];
        let k = 1.7;
        let mut rng = make_rng(4);
        for _ in 0..500 {
            let q = [4.0 * rng.next_f64() - 2.0, 4.0 * rng.next_f64() - 2.0];
            let boundary_gap =
                (k * (q[0] - apex[0]).abs() - (q[1] - apex[1]).abs()).abs();
            if boundary_gap < 1e-9 {
                continue;
            }
            let line_plus = SampledLinear {
                w: vec![k, 1.0],
                c: k * apex[0] + apex[1],
                provenance: Provenance::ConeSheet { plus: true },
            };
            let line_minus = SampledLinear {
                w: vec![-k, 1.0],
                c: -k * apex[0] + apex[1],
                provenance: Provenance::ConeSheet { plus: false },
            };
            let ind = |orientation: i8| ConeSample::Indicator {
                apex: apex.to_vec(),
                k,
                orientation,
            };
            let mut lines = [
                line_plus.label(&q).unwrap(),
                line_minus.label(&q).unwrap(),
            ];
            let mut inds = [
                ind(1).label(&q).unwrap(),
                ind(-1).label(&q).unwrap(),
            ];
            lines.sort_unstable();
            inds.sort_unstable();
            assert_eq!(lines, inds, "q={q:?}");
        }
    }

    #[test]
    fn lipschitz_spot_check_rejects_bad_pairs() {
        let mut rng = make_rng(9);
        let bad = ConeDistribution::new(
            1.0,
            1,
            Box::new(|x: &[f64]| 3.0 * x[0]), // 3-Lipschitz, claimed K = 1
            Box::new(|rng: &mut RngStream| vec![rng.next_std_normal()]),
            &mut rng,
        );
        assert!(bad.is_err());

        let good = ConeDistribution::for_target(TargetFn::Sin, 2.0, &mut rng);
        assert!(good.is_ok());
    }

    #[test]
    fn named_targets() {
        assert_eq!(TargetFn::from_name("sin").unwrap(), TargetFn::Sin);
        assert!(TargetFn::from_name("cubic").is_err());
        let saw = TargetFn::AbsSaw;
        assert_eq!(saw.eval(0.0), 1.0);
        assert_eq!(saw.eval(1.0), 0.0);
        assert_eq!(saw.eval(2.0), -1.0);
        assert_eq!(saw.eval(3.0), 0.0);
        assert_eq!(saw.eval(4.0), 1.0);
        assert_eq!(saw.eval(-1.0), 0.0);
        // unit slope everywhere
        for i in 0..200 {
            let x = -5.0 + 0.05 * i as f64;
            let df = (saw.eval(x + 1e-4) - saw.eval(x)).abs();
            assert!(df <= 1e-4 + 1e-12);
        }
    }

    #[test]
    fn generator_map_values() {
        let mut rng = make_rng(2);
        let zero = ConeDistribution::new(
            2.0,
            1,
            Box::new(|_: &[f64]| 0.0),
            Box::new(|rng: &mut RngStream| vec![rng.next_std_normal()]),
            &mut rng,
        )
        .unwrap();
        assert_eq!(generator_t(&zero, &[1.0]).unwrap(), vec![2.0, 0.0]);

        let linear = ConeDistribution::for_target(TargetFn::Linear, 1.0, &mut rng).unwrap();
        assert_eq!(generator_t(&linear, &[3.0]).unwrap(), vec![3.0, 3.0]);
        assert!(generator_t(&linear, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn generator_map_is_lipschitz() {
        // |T(s) - T(t)|_1 <= K(1 + K) ||s - t||_1 on sampled pairs.
        let mut rng = make_rng(12);
        let cd = ConeDistribution::for_target(TargetFn::Sin, 2.0, &mut rng).unwrap();
        let k = cd.k();
        for _ in 0..1000 {
            let s = vec![4.0 * rng.next_f64() - 2.0];
            let t = vec![4.0 * rng.next_f64() - 2.0];
            let ts = generator_t(&cd, &s).unwrap();
            let tt = generator_t(&cd, &t).unwrap();
            let out: f64 = ts.iter().zip(&tt).map(|(a, b)| (a - b).abs()).sum();
            let inp: f64 = s.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum();
            assert!(out <= k * (1.0 + k) * inp + 1e-9);
        }
    }

    #[test]
    fn network_matches_membership_oracle() {
        let mut rng = make_rng(86);
        for _ in 0..10_000 {
            let d = 1 + (rng.next_u64() % 5) as usize;
            let k = 0.1 + 9.9 * rng.next_f64();
            let p: Vec<f64> = (0..=d).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
            let q: Vec<f64> = (0..=d).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
            let params = l1cone_network_params(&p, k).unwrap();
            let net = eval_l1cone_network(&params, &q).unwrap();
            let oracle = cone_contains(&p, k, &q).unwrap();
            assert_eq!(net == 1, oracle, "p={p:?} k={k} q={q:?}");
        }
    }

    #[test]
    fn network_boundary_and_axis() {
        let params = l1cone_network_params(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(eval_l1cone_network(&params, &[0.0, 0.0]).unwrap(), 1); // apex
        assert_eq!(eval_l1cone_network(&params, &[1.0, 1.0]).unwrap(), 1); // boundary
        assert_eq!(eval_l1cone_network(&params, &[1.0, 2.0]).unwrap(), 1);
        assert_eq!(eval_l1cone_network(&params, &[2.0, 1.0]).unwrap(), -1);
        assert_eq!(eval_l1cone_network(&params, &[0.0, 500.0]).unwrap(), 1); // axis
        assert!(eval_l1cone_network(&params, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn neuron_counts() {
        let params = l1cone_network_params(&[0.0, 0.0, 0.0, 0.0], 1.0).unwrap(); // d = 3
        assert_eq!(params.paper_neuron_count(), 7); // 2d + 1
        assert_eq!(params.unit_count(), 9); // 2(d+1) + 1
    }

    #[test]
    fn slice_classification_signs() {
        let mut rng = make_rng(31);
        let cd = ConeDistribution::for_target(TargetFn::Linear, 1.0, &mut rng).unwrap();
        // amplify by hand: majority of 2001 slice samples
        let maj = |x: f64, stream: u64| -> i8 {
            let mut plus = 0i64;
            let mut s = make_rng(1000 + stream);
            for _ in 0..2001 {
                if classify_in_probability(&cd, &[x], &mut s).unwrap() == 1 {
                    plus += 1;
                } else {
                    plus -= 1;
                }
            }
            if plus >= 0 {
                1
            } else {
                -1
            }
        };
        assert_eq!(maj(2.0, 0), 1);
        assert_eq!(maj(-2.0, 1), -1);

        let mut rng2 = make_rng(33);
        let sin = ConeDistribution::for_target(TargetFn::Sin, 2.0, &mut rng2).unwrap();
        let maj_sin = |x: f64, stream: u64| -> i8 {
            let mut plus = 0i64;
            let mut s = make_rng(2000 + stream);
            for _ in 0..2001 {
                if classify_in_probability(&sin, &[x], &mut s).unwrap() == 1 {
                    plus += 1;
                } else {
                    plus -= 1;
                }
            }
            if plus >= 0 {
                1
            } else {
                -1
            }
        };
        assert_eq!(maj_sin(std::f64::consts::FRAC_PI_2, 0), 1);
        assert_eq!(maj_sin(-std::f64::consts::FRAC_PI_2, 1), -1);
    }
}
