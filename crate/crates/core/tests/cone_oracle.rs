//! Statistical verification of the cone-classifier distribution against its
//! defining probabilities, plus a quadrature oracle for the marginal
//! agreement probability.

use cfnn_core::cone::{
    cone_contains, sample_cone_classifier, sample_hp, ConeDistribution, ConeSample, TargetFn,
};
use cfnn_core::numerics::{make_rng, RngStream};

const N: u64 = 20_001;

fn four_sigma(p: f64) -> f64 {
    4.0 * (p * (1.0 - p) / N as f64).sqrt()
}

/// Frequency of "+1 (above)" over N draws of the full cone distribution.
fn freq_above(cd: &ConeDistribution, q: &[f64], rng: &mut RngStream) -> f64 {
    let mut plus = 0u64;
    for _ in 0..N {
        if sample_cone_classifier(cd, rng).label(q).unwrap() == 1 {
            plus += 1;
        }
    }
    plus as f64 / N as f64
}

/// Quadrature oracle for the probability that a sample answers the true side
/// at `q = (x, y)` off the graph: 1/2 plus half the zeta-mass of apexes whose
/// cone contains `q`.
fn agreement_oracle(target: TargetFn, zeta_scale: f64, x: f64, y: f64) -> f64 {
    let k = target.lipschitz();
    let lo = -8.0 * zeta_scale;
    let hi = 8.0 * zeta_scale;
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let mut mass = 0.0;
    for i in 0..n {
        let t = lo + (i as f64 + 0.5) * h;
        let inside = k * (x - t).abs() <= (y - target.eval(t)).abs();
        if inside {
            let z = t / zeta_scale;
            mass += (-0.5 * z * z).exp() / (zeta_scale * (2.0 * std::f64::consts::PI).sqrt()) * h;
        }
    }
    0.5 + 0.5 * mass
}

/// Exactly the two defining probabilities of the line pair: agreement 1
/// strictly inside the cone, a fair coin strictly outside.
#[test]
fn hp_lemma_probabilities() {
    let apex = [0.5, -0.3];
    let k = 1.0;
    let mut rng = make_rng(3);

    // strictly inside (upper and lower sheets): every draw answers the side
    for q in [[0.7, 1.5], [0.2, -2.0]] {
        for _ in 0..200 {
            let h = sample_hp(apex, k, &mut rng).unwrap();
            let side: i8 = if q[1] > apex[1] { 1 } else { -1 };
            assert_eq!(h.label(&q).unwrap(), side);
        }
    }

    // strictly outside: frequency of +1 within the 4-sigma band of 1/2
    let q = [3.0, -0.2];
    let mut plus = 0u64;
    for _ in 0..N {
        if sample_hp(apex, k, &mut rng).unwrap().label(&q).unwrap() == 1 {
            plus += 1;
        }
    }
    let f = plus as f64 / N as f64;
    assert!((f - 0.5).abs() < four_sigma(0.5), "f={f}");
}

/// On-graph queries are answered "+1" with probability exactly 1/2.
#[test]
fn on_graph_neutrality() {
    let mut setup = make_rng(5);
    let cd = ConeDistribution::for_target(TargetFn::Zero, 1.0, &mut setup).unwrap();
    let mut rng = make_rng(6);
    let f = freq_above(&cd, &[0.0, 0.0], &mut rng);
    assert!((f - 0.5).abs() < four_sigma(0.5), "f={f}");

    let sin = ConeDistribution::for_target(TargetFn::Sin, 2.0, &mut setup).unwrap();
    for (i, x) in [-1.3, 0.4, 2.0].into_iter().enumerate() {
        let mut rng = make_rng(7 + i as u64);
        let f = freq_above(&sin, &[x, x.sin()], &mut rng);
        assert!((f - 0.5).abs() < four_sigma(0.5), "x={x} f={f}");
    }
}

/// Off-graph queries win their side with probability above 1/2, and the
/// empirical frequency matches the quadrature oracle.
#[test]
fn off_graph_agreement_matches_quadrature() {
    let mut setup = make_rng(8);

    // zero target, query above the graph
    let cd = ConeDistribution::for_target(TargetFn::Zero, 1.0, &mut setup).unwrap();
    let q = [0.0, 1.0];
    let f = freq_above(&cd, &q, &mut make_rng(9));
    let oracle = agreement_oracle(TargetFn::Zero, 1.0, q[0], q[1]);
    assert!(f > 0.5 + four_sigma(0.5), "f={f}");
    assert!((f - oracle).abs() < 1.25 * four_sigma(oracle), "f={f} oracle={oracle}");

    // sine target, query below the graph: count "below" answers
    let sin = ConeDistribution::for_target(TargetFn::Sin, 2.0, &mut setup).unwrap();
    let q = [0.0, -0.5];
    let f_above = freq_above(&sin, &q, &mut make_rng(10));
    let f_below = 1.0 - f_above;
    let oracle = agreement_oracle(TargetFn::Sin, 2.0, q[0], q[1]);
    assert!(f_below > 0.5 + four_sigma(0.5), "f_below={f_below}");
    assert!(
        (f_below - oracle).abs() < 1.25 * four_sigma(oracle),
        "f_below={f_below} oracle={oracle}"
    );
}

/// The d >= 2 indicator encoding obeys the same two probabilities.
#[test]
fn plane_distribution_in_two_inputs() {
    let mut setup = make_rng(11);
    // f'(x1, x2) = 0 over R^2, zeta = N(0, I_2)
    let cd = ConeDistribution::new(
        1.0,
        2,
        Box::new(|_: &[f64]| 0.0),
        Box::new(|rng: &mut RngStream| {
            vec![rng.next_std_normal(), rng.next_std_normal()]
        }),
        &mut setup,
    )
    .unwrap();

    let mut rng = make_rng(12);
    // above the plane: wins significantly
    let f = freq_above(&cd, &[0.0, 0.0, 1.0], &mut rng);
    assert!(f > 0.5 + four_sigma(0.5), "f={f}");
    // on the plane: neutral
    let f = freq_above(&cd, &[0.3, -0.4, 0.0], &mut rng);
    assert!((f - 0.5).abs() < four_sigma(0.5), "f={f}");

    // fixed-apex indicator sample: certain inside, coin outside
    let apex = vec![0.0, 0.0, 0.0];
    let inside = [0.25, 0.25, 1.0];
    let outside = [2.0, 2.0, 0.5];
    for orientation in [1i8, -1] {
        let s = ConeSample::Indicator {
            apex: apex.clone(),
            k: 1.0,
            orientation,
        };
        assert!(cone_contains(&apex, 1.0, &inside).unwrap());
        assert_eq!(s.label(&inside).unwrap(), 1);
        assert!(!cone_contains(&apex, 1.0, &outside).unwrap());
        assert_eq!(s.label(&outside).unwrap(), orientation);
    }
}
