//! Aggregation of repeated stochastic classifier samples.
//!
//! A stochastic classifier answers with a single class label per draw;
//! amplification samples it `n` times and aggregates. Majority aggregation
//! recovers the modal class, and its accuracy over a dataset is the
//! empirical random accuracy. Delta curves, mean aggregation and the
//! indicator-MSE estimator live here too.
//!
//! Stream discipline: dataset point `i` draws from `split(run, i)` and sample
//! `j` within a point from `split(point, j)`, so results never depend on
//! evaluation order.

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// A classifier whose output is a random label in `0..class_count()`.
///
/// Samples taken with distinct split streams are independent given `x`.
pub trait StochasticClassifier {
    fn class_count(&self) -> usize;

    /// Draw one label for `x`.
    fn sample_label(&self, x: &[f64], rng: &mut RngStream) -> Result<usize>;

    /// Exact per-class probabilities, when a closed form exists.
    fn analytic_probs(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Empirical class-probability vector with its sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate {
    pub counts: Vec<u64>,
    pub n: u64,
    pub p_hat: Vec<f64>,
}

impl ProbabilityEstimate {
    fn from_counts(counts: Vec<u64>) -> Self {
        let n: u64 = counts.iter().sum();
        let p_hat = counts.iter().map(|&c| c as f64 / n as f64).collect();
        ProbabilityEstimate { counts, n, p_hat }
    }

    /// Index of the largest count, ties toward the smallest index.
    pub fn argmax(&self) -> usize {
        argmax_tie_low_u64(&self.counts)
    }
}

fn argmax_tie_low_u64(v: &[u64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Argmax over f64 entries, ties toward the smallest index.
pub fn argmax_tie_low(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Majority label of a sequence, ties toward the smallest label index.
pub fn majority(labels: &[usize], class_count: usize) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::domain("majority of an empty sequence"));
    }
    let mut counts = vec![0u64; class_count];
    for &l in labels {
        if l >= class_count {
            return Err(Error::domain(format!(
                "label {l} out of range for {class_count} classes"
            )));
        }
        counts[l] += 1;
    }
    Ok(argmax_tie_low_u64(&counts))
}

/// Histogram of `n` independent samples at `x`, one split stream per sample.
pub fn estimate_probs<C: StochasticClassifier + ?Sized>(
    clf: &C,
    x: &[f64],
    n: u64,
    point_rng: &RngStream,
) -> Result<ProbabilityEstimate> {
    if n == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let c = clf.class_count();
    let mut counts = vec![0u64; c];
    for j in 0..n {
        let mut s = point_rng.split(j);
        let label = clf.sample_label(x, &mut s)?;
        if label >= c {
            return Err(Error::domain(format!(
                "classifier emitted label {label} >= class count {c}"
            )));
        }
        counts[label] += 1;
    }
    Ok(ProbabilityEstimate::from_counts(counts))
}

/// Majority-amplified prediction from `n` samples.
pub fn amplified_predict<C: StochasticClassifier + ?Sized>(
    clf: &C,
    x: &[f64],
    n: u64,
    point_rng: &RngStream,
) -> Result<usize> {
    Ok(estimate_probs(clf, x, n, point_rng)?.argmax())
}

/// Fraction of dataset points whose `n`-sample majority equals the label.
pub fn empirical_random_accuracy<C: StochasticClassifier + ?Sized>(
    clf: &C,
    dataset: &[(Vec<f64>, usize)],
    n: u64,
    run_rng: &RngStream,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    let mut correct = 0u64;
    for (i, (x, y)) in dataset.iter().enumerate() {
        let point_rng = run_rng.split(i as u64);
        if amplified_predict(clf, x, n, &point_rng)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Per-point margins `p_hat[y] - max_{j != y} p_hat[j]` and the fraction of
/// points the majority gets right on the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCurve {
    /// Sorted descending; one entry per dataset point.
    pub deltas: Vec<f64>,
    /// Fraction with positive margin, ties resolved by the majority rule.
    /// Equals [`empirical_random_accuracy`] computed from the same streams.
    pub positive_fraction: f64,
}

/// Delta curve of a dataset: uses exactly the same split streams as
/// [`empirical_random_accuracy`], so `positive_fraction` matches it.
pub fn delta_curve<C: StochasticClassifier + ?Sized>(
    clf: &C,
    dataset: &[(Vec<f64>, usize)],
    n: u64,
    run_rng: &RngStream,
) -> Result<DeltaCurve> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    let mut deltas = Vec::with_capacity(dataset.len());
    let mut correct = 0u64;
    for (i, (x, y)) in dataset.iter().enumerate() {
        let point_rng = run_rng.split(i as u64);
        let est = estimate_probs(clf, x, n, &point_rng)?;
        if *y >= est.p_hat.len() {
            return Err(Error::domain(format!("label {y} out of range")));
        }
        let best_other = est
            .p_hat
            .iter()
            .enumerate()
            .filter(|(j, _)| j != y)
            .map(|(_, &p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        deltas.push(est.p_hat[*y] - best_other);
        if est.argmax() == *y {
            correct += 1;
        }
    }
    let positive_fraction = correct as f64 / dataset.len() as f64;
    deltas.sort_by(|a, b| b.partial_cmp(a).expect("deltas are finite"));
    Ok(DeltaCurve {
        deltas,
        positive_fraction,
    })
}

/// Argmax of the elementwise mean of output vectors, ties toward the
/// smallest index.
pub fn mean_aggregate(outputs: &[Vec<f64>]) -> Result<usize> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::domain("mean of an empty sequence"))?;
    let len = first.len();
    let mut mean = vec![0.0; len];
    for out in outputs {
        if out.len() != len {
            return Err(Error::shape(format!(
                "output lengths differ: {} vs {}",
                out.len(),
                len
            )));
        }
        for (m, v) in mean.iter_mut().zip(out) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= outputs.len() as f64;
    }
    Ok(argmax_tie_low(&mean))
}

/// Which squared-error convention [`empirical_mse`] reports. The mismatch
/// indicator treats classes as labels; `Squared` multiplies by 4, the literal
/// square of a {-1, +1} difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseConvention {
    Indicator,
    Squared,
}

/// Monte Carlo estimate of the majority-vote squared error of a binary
/// classifier against `truth`, over `n_points` draws from `mu_sampler`.
///
/// Class 1 stands for the "+1" side. `n_maj` must be odd so the vote cannot
/// tie.
pub fn empirical_mse<C, T, M>(
    clf: &C,
    truth: T,
    mu_sampler: M,
    n_maj: u64,
    n_points: u64,
    run_rng: &RngStream,
    convention: MseConvention,
) -> Result<f64>
where
    C: StochasticClassifier + ?Sized,
    T: Fn(&[f64]) -> i8,
    M: Fn(&mut RngStream) -> Vec<f64>,
{
    if n_maj % 2 == 0 {
        return Err(Error::domain(format!(
            "majority size {n_maj} must be odd"
        )));
    }
    if n_points == 0 {
        return Err(Error::domain("need at least one evaluation point"));
    }
    if clf.class_count() != 2 {
        return Err(Error::domain("indicator-MSE needs a binary classifier"));
    }
    let mut mismatches = 0u64;
    for i in 0..n_points {
        let point_rng = run_rng.split(i);
        let x = mu_sampler(&mut point_rng.split(0));
        let predicted = amplified_predict(clf, &x, n_maj, &point_rng.split(1))?;
        let predicted_pm1: i8 = if predicted == 1 { 1 } else { -1 };
        if predicted_pm1 != truth(&x) {
            mismatches += 1;
        }
    }
    let indicator = mismatches as f64 / n_points as f64;
    Ok(match convention {
        MseConvention::Indicator => indicator,
        MseConvention::Squared => 4.0 * indicator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_rng;

    /// Test classifier with a fixed success probability per point: label 1
    /// with probability `p(x)`.
    struct Synthetic<F: Fn(&[f64]) -> f64>(F);

    impl<F: Fn(&[f64]) -> f64> StochasticClassifier for Synthetic<F> {
        fn class_count(&self) -> usize {
            2
        }
        fn sample_label(&self, x: &[f64], rng: &mut RngStream) -> Result<usize> {
            Ok(usize::from(rng.next_f64() < (self.0)(x)))
        }
        fn analytic_probs(&self, x: &[f64]) -> Option<Vec<f64>> {
            let p = (self.0)(x);
            Some(vec![1.0 - p, p])
        }
    }

    struct Constant(usize, usize);

    impl StochasticClassifier for Constant {
        fn class_count(&self) -> usize {
            self.1
        }
        fn sample_label(&self, _x: &[f64], _rng: &mut RngStream) -> Result<usize> {
            Ok(self.0)
        }
    }

    #[test]
    fn majority_basics() {
        assert_eq!(majority(&[1, 1, 0], 2).unwrap(), 1);
        assert_eq!(majority(&[0, 1], 2).unwrap(), 0); // tie -> smallest
        assert_eq!(majority(&[2, 2, 1, 0, 2], 3).unwrap(), 2);
        assert!(majority(&[], 2).is_err());
        assert!(majority(&[3], 2).is_err());
    }

    #[test]
    fn majority_permutation_invariant() {
        let base = [0usize, 2, 2, 1, 2, 0, 1, 2, 2, 0];
        let m = majority(&base, 3).unwrap();
        let mut rot = base.to_vec();
        for _ in 0..base.len() {
            rot.rotate_left(1);
            assert_eq!(majority(&rot, 3).unwrap(), m);
        }
        let mut rev = base.to_vec();
        rev.reverse();
        assert_eq!(majority(&rev, 3).unwrap(), m);
    }

    #[test]
    fn estimate_probs_deterministic_classifier() {
        let clf = Constant(1, 2);
        let est = estimate_probs(&clf, &[0.0], 7, &make_rng(1)).unwrap();
        assert_eq!(est.counts, vec![0, 7]);
        assert_eq!(est.p_hat, vec![0.0, 1.0]);
        assert!(estimate_probs(&clf, &[0.0], 0, &make_rng(1)).is_err());
    }

    #[test]
    fn estimate_probs_reproducible() {
        let clf = Synthetic(|_: &[f64]| 0.37);
        let a = estimate_probs(&clf, &[0.0], 501, &make_rng(9)).unwrap();
        let b = estimate_probs(&clf, &[0.0], 501, &make_rng(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, 501);
        assert_eq!(a.counts.iter().sum::<u64>(), 501);
        let sum: f64 = a.p_hat.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplified_predict_n1_equals_single_sample() {
        let clf = Synthetic(|_: &[f64]| 0.37);
        let rng = make_rng(11);
        for i in 0..50 {
            let point = rng.split(i);
            let via_amp = amplified_predict(&clf, &[0.0], 1, &point).unwrap();
            let mut s = point.split(0);
            let direct = clf.sample_label(&[0.0], &mut s).unwrap();
            assert_eq!(via_amp, direct);
        }
    }

    #[test]
    fn random_accuracy_of_deterministic_is_plain_accuracy() {
        let clf = Constant(1, 2);
        let data = vec![
            (vec![0.0], 1usize),
            (vec![1.0], 0),
            (vec![2.0], 1),
            (vec![3.0], 1),
        ];
        for n in [1, 3, 17] {
            let ra = empirical_random_accuracy(&clf, &data, n, &make_rng(0)).unwrap();
            assert_eq!(ra, 0.75);
        }
    }

    #[test]
    fn random_accuracy_matches_outcome_enumeration() {
        // Three points with known success probabilities, n = 3 samples.
        // Exact RA = mean over points of P[majority correct] =
        // mean of [p^3 + 3 p^2 (1-p)].
        let ps = [0.9, 0.6, 0.2];
        let data: Vec<(Vec<f64>, usize)> =
            ps.iter().map(|&p| (vec![p], 1usize)).collect();
        let clf = Synthetic(|x: &[f64]| x[0]);
        let exact: f64 = ps
            .iter()
            .map(|p| p.powi(3) + 3.0 * p.powi(2) * (1.0 - p))
            .sum::<f64>()
            / 3.0;

        let runs = 4000;
        let root = make_rng(123);
        let mut total = 0.0;
        for r in 0..runs {
            total += empirical_random_accuracy(&clf, &data, 3, &root.split(r)).unwrap();
        }
        let mean = total / runs as f64;
        // each run averages 3 Bernoulli outcomes; 4 sigma of the run mean
        let sigma = (0.25 / (3.0 * runs as f64)).sqrt();
        assert!(
            (mean - exact).abs() < 4.0 * sigma + 1e-9,
            "mean={mean} exact={exact}"
        );
    }

    #[test]
    fn delta_curve_values() {
        // deterministic always-correct classifier: all deltas 1
        let clf = Constant(1, 3);
        let data = vec![(vec![0.0], 1usize), (vec![1.0], 1)];
        let dc = delta_curve(&clf, &data, 9, &make_rng(2)).unwrap();
        assert_eq!(dc.deltas, vec![1.0, 1.0]);
        assert_eq!(dc.positive_fraction, 1.0);
    }

    #[test]
    fn delta_positive_fraction_equals_ra_with_ties() {
        // p = 1/2 exactly and even n force count ties; the tie rule must make
        // the delta fraction and RA agree exactly.
        let clf = Synthetic(|_: &[f64]| 0.5);
        let data: Vec<(Vec<f64>, usize)> = (0..40)
            .map(|i| (vec![i as f64], (i % 2) as usize))
            .collect();
        for n in [2, 4, 7] {
            let rng = make_rng(77);
            let ra = empirical_random_accuracy(&clf, &data, n, &rng).unwrap();
            let dc = delta_curve(&clf, &data, n, &rng).unwrap();
            assert_eq!(dc.positive_fraction, ra, "n={n}");
        }
    }

    #[test]
    fn mean_aggregate_basics() {
        assert_eq!(
            mean_aggregate(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap(),
            1
        );
        assert_eq!(mean_aggregate(&[vec![0.3, 0.2, 0.1]]).unwrap(), 0);
        assert_eq!(
            mean_aggregate(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            0 // tie -> smallest index
        );
        assert!(mean_aggregate(&[]).is_err());
        assert!(mean_aggregate(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mean_aggregate_permutation_invariant() {
        let outs = vec![vec![0.1, 0.9], vec![0.8, 0.2], vec![0.4, 0.45]];
        let m = mean_aggregate(&outs).unwrap();
        let mut rot = outs.clone();
        rot.rotate_left(1);
        assert_eq!(mean_aggregate(&rot).unwrap(), m);
        rot.reverse();
        assert_eq!(mean_aggregate(&rot).unwrap(), m);
    }

    #[test]
    fn empirical_mse_limits() {
        // perfect deterministic classifier -> 0
        let perfect = Synthetic(|x: &[f64]| if x[0] > 0.0 { 1.0 } else { 0.0 });
        let truth = |x: &[f64]| if x[0] > 0.0 { 1i8 } else { -1 };
        let sampler = |rng: &mut RngStream| vec![rng.next_f64() * 2.0 - 1.0];
        let mse = empirical_mse(
            &perfect,
            truth,
            sampler,
            9,
            500,
            &make_rng(3),
            MseConvention::Indicator,
        )
        .unwrap();
        assert_eq!(mse, 0.0);

        // constant +1 classifier on an all-negative truth -> 1 (and 4 scaled)
        let always_one = Constant(1, 2);
        let neg_truth = |_: &[f64]| -1i8;
        let mse1 = empirical_mse(
            &always_one,
            neg_truth,
            |rng: &mut RngStream| vec![rng.next_f64()],
            9,
            200,
            &make_rng(4),
            MseConvention::Indicator,
        )
        .unwrap();
        assert_eq!(mse1, 1.0);
        let mse4 = empirical_mse(
            &always_one,
            neg_truth,
            |rng: &mut RngStream| vec![rng.next_f64()],
            9,
            200,
            &make_rng(4),
            MseConvention::Squared,
        )
        .unwrap();
        assert_eq!(mse4, 4.0);

        // even majority size rejected
        assert!(empirical_mse(
            &always_one,
            neg_truth,
            |rng: &mut RngStream| vec![rng.next_f64()],
            10,
            200,
            &make_rng(4),
            MseConvention::Indicator,
        )
        .is_err());
    }
}
