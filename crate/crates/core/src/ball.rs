//! Randomized linear classifiers for the d-dimensional ball.
//!
//! Two closed-form constructions classify `sgn(||x|| - R)` in probability:
//! a Gaussian-direction classifier valid in any dimension, and a 2-D tangent
//! construction. Both mix a linear classifier (chosen with probability
//! `alpha`) with a constant "+1" classifier (probability `1 - alpha`), which
//! shifts the success probability across 1/2 exactly on the sphere of radius
//! `R`. The module also houses the Hoeffding and MSE sample-size calculators
//! that say how many majority votes are needed for a target error.

use std::f64::consts::PI;

use crate::amplify::StochasticClassifier;
use crate::error::{Error, Result};
use crate::numerics::{
    sample_bernoulli, sample_std_normal_vec, std_normal_cdf, std_normal_quantile, RngStream,
};

pub(crate) fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sign with the fixed convention `sign(0) = +1`.
#[inline]
pub fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::DegenerateAlpha(alpha))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("radius {r} must be positive")))
    }
}

/// Bias of the Gaussian-direction ball classifier: `R * quantile(1/(2*alpha))`.
///
/// Positive for all valid `alpha`; the success probability of the induced
/// classifier crosses 1/2 exactly at `||x|| = R`.
pub fn solve_ball_bias(radius: f64, alpha: f64) -> Result<f64> {
    check_radius(radius)?;
    check_alpha(alpha)?;
    Ok(radius * std_normal_quantile(1.0 / (2.0 * alpha))?)
}

/// Tangent radius for the 2-D tangent construction.
///
/// Chosen so the success probability `(1-alpha) + (alpha/pi)*arccos(b/r)`
/// equals exactly 1/2 at `r = R`, which gives `b = R*cos(pi*(1 - 1/(2*alpha)))`.
pub fn solve_tangent_bias(radius: f64, alpha: f64) -> Result<f64> {
    check_radius(radius)?;
    check_alpha(alpha)?;
    Ok(radius * (PI * (1.0 - 1.0 / (2.0 * alpha))).cos())
}

/// Parameters of the Gaussian-direction ball classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct BallParams {
    dim: usize,
    radius: f64,
    alpha: f64,
    bias: f64,
}

impl BallParams {
    pub fn new(dim: usize, radius: f64, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("ball dimension must be >= 1".into()));
        }
        let bias = solve_ball_bias(radius, alpha)?;
        Ok(BallParams {
            dim,
            radius,
            alpha,
            bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

/// Parameters of the 2-D tangent classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentParams {
    radius: f64,
    alpha: f64,
    bias: f64,
}

impl TangentParams {
    pub fn new(radius: f64, alpha: f64) -> Result<Self> {
        let bias = solve_tangent_bias(radius, alpha)?;
        Ok(TangentParams {
            radius,
            alpha,
            bias,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Radius of the circle the sampled lines are tangent to; in (0, R).
    pub fn bias(&self) -> f64 {
        self.bias
    }
}

/// The raw draws behind a sampled classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Gaussian direction `u` and coin `t`.
    Gaussian { u: Vec<f64>, t: u8 },
    /// Tangent angle `theta` and coin `t`.
    Tangent { theta: f64, t: u8 },
    /// One of the two cone sheet lines through an apex.
    ConeSheet { plus: bool },
}

/// An affine classifier `x -> sign(w . x - c)`.
///
/// The coin outcome `t = 0` is encoded as `w = 0, c = -1`, which labels every
/// point `+1` while staying in the same affine form.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLinear {
    pub w: Vec<f64>,
    pub c: f64,
    pub provenance: Provenance,
}

impl SampledLinear {
    pub fn label(&self, x: &[f64]) -> Result<i8> {
        if x.len() != self.w.len() {
            return Err(Error::shape(format!(
                "classifier expects dimension {}, got {}",
                self.w.len(),
                x.len()
            )));
        }
        let dot: f64 = self.w.iter().zip(x).map(|(w, x)| w * x).sum();
        Ok(sign(dot - self.c))
    }
}

/// Draw one Gaussian-direction ball classifier.
///
/// `u ~ N(0, I_d)` and `t ~ Ber(alpha)` are both drawn regardless of the coin
/// outcome so the stream advances identically on every call.
pub fn sample_ball_classifier(params: &BallParams, rng: &mut RngStream) -> SampledLinear {
    let u = sample_std_normal_vec(rng, params.dim).expect("dim validated at construction");
    let t = sample_bernoulli(rng, params.alpha).expect("alpha validated at construction");
    if t == 1 {
        SampledLinear {
            w: u.clone(),
            c: params.bias,
            provenance: Provenance::Gaussian { u, t },
        }
    } else {
        SampledLinear {
            w: vec![0.0; params.dim],
            c: -1.0,
            provenance: Provenance::Gaussian { u, t },
        }
    }
}

/// Draw one tangent classifier (2-D inputs).
pub fn sample_tangent_classifier(params: &TangentParams, rng: &mut RngStream) -> SampledLinear {
    let theta = 2.0 * PI * rng.next_f64();
    let t = sample_bernoulli(rng, params.alpha).expect("alpha validated at construction");
    if t == 1 {
        SampledLinear {
            w: vec![theta.cos(), theta.sin()],
            c: params.bias,
            provenance: Provenance::Tangent { theta, t },
        }
    } else {
        SampledLinear {
            w: vec![0.0, 0.0],
            c: -1.0,
            provenance: Provenance::Tangent { theta, t },
        }
    }
}

/// Probability that the ball classifier outputs "+1" (outside) at radius
/// `norm_x`: `1 - alpha * cdf(b / norm_x)`, with the `norm_x = 0` limit
/// `1 - alpha`.
pub fn analytic_p1_ball(params: &BallParams, norm_x: f64) -> Result<f64> {
    if norm_x < 0.0 || !norm_x.is_finite() {
        return Err(Error::domain(format!("norm {norm_x} must be >= 0")));
    }
    if norm_x == 0.0 {
        return Ok(1.0 - params.alpha);
    }
    Ok(1.0 - params.alpha * std_normal_cdf(params.bias / norm_x))
}

/// Probability that the tangent classifier outputs "+1" at radius `norm_x`.
///
/// Inside the tangent circle (`norm_x < b`) only the constant branch can say
/// "+1", so the value is `1 - alpha`; outside it is
/// `(1-alpha) + (alpha/pi) * arccos(b/norm_x)`.
pub fn analytic_p1_tangent(params: &TangentParams, norm_x: f64) -> Result<f64> {
    if norm_x < 0.0 || !norm_x.is_finite() {
        return Err(Error::domain(format!("norm {norm_x} must be >= 0")));
    }
    if norm_x < params.bias {
        return Ok(1.0 - params.alpha);
    }
    Ok(1.0 - params.alpha + params.alpha / PI * (params.bias / norm_x).acos())
}

/// Worst-case distance of the success probability from 1/2 outside the shell
/// `[R - phi, R + phi]`:
/// `min(1/2 - alpha*cdf(b/(R+phi)), alpha*cdf(b/(R-phi)) - 1/2)`.
pub fn epsilon_p(params: &BallParams, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < params.radius) {
        return Err(Error::domain(format!(
            "shell half-width {phi} must lie in (0, R={})",
            params.radius
        )));
    }
    let outer = 0.5 - params.alpha * std_normal_cdf(params.bias / (params.radius + phi));
    let inner = params.alpha * std_normal_cdf(params.bias / (params.radius - phi)) - 0.5;
    Ok(outer.min(inner))
}

/// Samples needed so a majority vote errs with probability at most `beta`
/// when each vote is correct with margin `eps_p` past 1/2:
/// the smallest integer `n >= ln(1/beta) / (2 * eps_p^2)`, floored at 1 and
/// bumped to the next odd integer so the vote cannot tie.
pub fn hoeffding_samples(beta: f64, eps_p: f64) -> Result<u64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!(
            "failure probability {beta} outside (0, 1]"
        )));
    }
    if eps_p <= 0.0 {
        return Err(Error::domain(format!("margin {eps_p} must be positive")));
    }
    let raw = (1.0 / beta).ln() / (2.0 * eps_p * eps_p);
    let mut n = raw.ceil() as u64;
    if n < 1 {
        n = 1;
    }
    if n % 2 == 0 {
        n += 1;
    }
    Ok(n)
}

/// Majority size that drives the indicator-MSE below `eps`, with the margin
/// supplied directly: [`hoeffding_samples`] at `beta = (eps/2) / (1 - eps/2)`.
pub fn mse_bound_samples_with_margin(eps: f64, eps_p: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("target MSE {eps} outside (0, 1)")));
    }
    let beta = (eps / 2.0) / (1.0 - eps / 2.0);
    hoeffding_samples(beta, eps_p)
}

/// Majority size that drives the indicator-MSE below `eps` for an input
/// distribution that puts no mass on the shell `[R - phi, R + phi]`.
pub fn mse_bound_samples(eps: f64, params: &BallParams, phi: f64) -> Result<u64> {
    mse_bound_samples_with_margin(eps, epsilon_p(params, phi)?)
}

/// Viewed as a stochastic classifier: class 1 is "outside the ball".
impl StochasticClassifier for BallParams {
    fn class_count(&self) -> usize {
        2
    }

    fn sample_label(&self, x: &[f64], rng: &mut RngStream) -> Result<usize> {
        let clf = sample_ball_classifier(self, rng);
        Ok(usize::from(clf.label(x)? == 1))
    }

    fn analytic_probs(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p1 = analytic_p1_ball(self, l2_norm(x)).ok()?;
        Some(vec![1.0 - p1, p1])
    }
}

/// Viewed as a stochastic classifier over 2-D inputs: class 1 is "outside".
impl StochasticClassifier for TangentParams {
    fn class_count(&self) -> usize {
        2
    }

    fn sample_label(&self, x: &[f64], rng: &mut RngStream) -> Result<usize> {
        let clf = sample_tangent_classifier(self, rng);
        Ok(usize::from(clf.label(x)? == 1))
    }

    fn analytic_probs(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p1 = analytic_p1_tangent(self, l2_norm(x)).ok()?;
        Some(vec![1.0 - p1, p1])
    }
}

/// The two-layer combiner `sum_j eps_j * (maj_n[ball a_j](x) - maj_n[ball b_j](x))`,
/// where each majority is over `n` fresh ball-classifier samples at the given
/// radius and the majority value is taken as a number in {-1, +1}.
pub struct GtildeCombiner {
    shells: Vec<(BallParams, BallParams, f64)>,
    n: u64,
}

/// Build the combiner from shells `(a_j, b_j, eps_j)` with `eps_j` in {-1, +1}.
pub fn build_gtilde_combiner(
    dim: usize,
    shells: &[(f64, f64, i8)],
    alpha: f64,
    n: u64,
) -> Result<GtildeCombiner> {
    if shells.is_empty() {
        return Err(Error::domain("combiner needs at least one shell"));
    }
    if n % 2 == 0 {
        return Err(Error::domain(format!(
            "per-neuron sample count {n} must be odd"
        )));
    }
    let shells = shells
        .iter()
        .map(|&(a, b, e)| {
            if e != 1 && e != -1 {
                return Err(Error::domain(format!("shell sign {e} must be +/-1")));
            }
            Ok((
                BallParams::new(dim, a, alpha)?,
                BallParams::new(dim, b, alpha)?,
                f64::from(e),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GtildeCombiner { shells, n })
}

impl GtildeCombiner {
    /// Evaluate the combiner at `x`. Each inner majority uses its own split
    /// stream, so the result is deterministic in `(x, rng)`.
    pub fn eval(&self, x: &[f64], rng: &RngStream) -> Result<f64> {
        let mut total = 0.0;
        for (j, (pa, pb, eps)) in self.shells.iter().enumerate() {
            let mut sa = rng.split(2 * j as u64);
            let mut sb = rng.split(2 * j as u64 + 1);
            let maj_a = majority_pm1(pa, x, self.n, &mut sa)?;
            let maj_b = majority_pm1(pb, x, self.n, &mut sb)?;
            total += eps * (maj_a - maj_b);
        }
        Ok(total)
    }

    pub fn samples_per_neuron(&self) -> u64 {
        self.n
    }
}

fn majority_pm1(params: &BallParams, x: &[f64], n: u64, rng: &mut RngStream) -> Result<f64> {
    let mut plus = 0u64;
    for j in 0..n {
        let mut s = rng.split(j);
        if sample_ball_classifier(params, &mut s).label(x)? == 1 {
            plus += 1;
        }
    }
    Ok(if 2 * plus >= n { 1.0 } else { -1.0 })
}
