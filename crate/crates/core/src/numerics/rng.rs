//! Splittable counter-based random number streams.
//!
//! Every stochastic operation in this crate draws from an explicit
//! [`RngStream`]. A stream is a pure function of `(seed, stream_id, counter)`,
//! so the same configuration always replays the same draws, and per-point
//! child streams obtained with [`RngStream::split`] can be evaluated in any
//! order (or in parallel) without changing results.
//!
//! The output function is the SplitMix64 construction: a strong 64-bit mixer
//! applied to a Weyl sequence over the counter. Splitting re-keys the mixer by
//! hashing the child index into the stream id, so child sequences are
//! decorrelated from the parent and from each other.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x243F_6A88_85A3_08D3;
const SPLIT_SALT: u64 = 0xB792_1FA5_76E5_2D4B;

/// murmur3 finalizer; full avalanche on 64 bits.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    z = (z ^ (z >> 33)).wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    z ^ (z >> 33)
}

/// A deterministic, splittable stream of random numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    key: u64,
}

impl RngStream {
    /// Root stream for a seed: `stream_id` 0, counter 0.
    pub fn new(seed: u64) -> Self {
        Self::with_stream_id(seed, 0)
    }

    fn with_stream_id(seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(seed.wrapping_add(SEED_SALT)) ^ stream_id);
        RngStream {
            seed,
            stream_id,
            counter: 0,
            key,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Child stream `k`. The parent is not advanced; distinct `k` give
    /// decorrelated sequences, and splitting a child differs from splitting
    /// the parent again.
    pub fn split(&self, k: u64) -> RngStream {
        let child_id = mix64(self.stream_id ^ mix64(k.wrapping_add(SPLIT_SALT)));
        Self::with_stream_id(self.seed, child_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        mix64(self.key.wrapping_add(c.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform f64 in [0, 1), using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller. Consumes exactly two uniforms.
    pub fn next_std_normal(&mut self) -> f64 {
        // 1 - u lies in (0, 1], which keeps the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// Root stream for `seed`.
pub fn make_rng(seed: u64) -> RngStream {
    RngStream::new(seed)
}

/// Child stream `k` of `rng`; the parent is unchanged.
pub fn split_stream(rng: &RngStream, k: u64) -> RngStream {
    rng.split(k)
}

/// `d` independent standard normal draws.
pub fn sample_std_normal_vec(rng: &mut RngStream, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension("normal vector needs d >= 1".into()));
    }
    Ok((0..d).map(|_| rng.next_std_normal()).collect())
}

/// One Bernoulli(alpha) draw, as 0/1.
pub fn sample_bernoulli(rng: &mut RngStream, alpha: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!(
            "bernoulli probability {alpha} outside [0, 1]"
        )));
    }
    Ok(u8::from(rng.next_f64() < alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = make_rng(42);
        let mut b = make_rng(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = make_rng(42);
        let mut b = make_rng(43);
        let diff = (0..100).filter(|_| a.next_f64() != b.next_f64()).count();
        assert!(diff > 0);
    }

    #[test]
    fn zero_seed_is_valid() {
        let mut s = make_rng(0);
        let x = s.next_f64();
        assert!((0.0..1.0).contains(&x));
    }

    #[test]
    fn split_is_deterministic_and_keyed() {
        let s = make_rng(7);
        let mut c1 = s.split(3);
        let mut c2 = s.split(3);
        for _ in 0..50 {
            assert_eq!(c1.next_u64(), c2.next_u64());
        }

        let mut c3 = s.split(3);
        let mut c4 = s.split(4);
        let diff = (0..100).filter(|_| c3.next_u64() != c4.next_u64()).count();
        assert!(diff > 90);
    }

    #[test]
    fn nested_split_differs_from_single() {
        let s = make_rng(7);
        let mut once = s.split(1);
        let mut twice = s.split(1).split(1);
        let diff = (0..100).filter(|_| once.next_u64() != twice.next_u64()).count();
        assert!(diff > 90);
    }

    #[test]
    fn split_leaves_parent_untouched() {
        let s = make_rng(11);
        let counter_before = s.counter();
        let _ = s.split(5);
        assert_eq!(s.counter(), counter_before);
    }

    #[test]
    fn bernoulli_limits() {
        let mut rng = make_rng(1);
        for _ in 0..200 {
            assert_eq!(sample_bernoulli(&mut rng, 1.0).unwrap(), 1);
            assert_eq!(sample_bernoulli(&mut rng, 0.0).unwrap(), 0);
        }
        assert!(sample_bernoulli(&mut rng, 1.5).is_err());
        assert!(sample_bernoulli(&mut rng, -0.1).is_err());
    }

    #[test]
    fn bernoulli_mean_near_alpha() {
        let mut rng = make_rng(2024);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| f64::from(sample_bernoulli(&mut rng, 0.75).unwrap()))
            .sum::<f64>()
            / n as f64;
        // binomial 3-sigma band around 0.75
        assert!((mean - 0.75).abs() < 0.015, "mean {mean}");
    }

    #[test]
    fn normal_vec_shape_and_errors() {
        let mut rng = make_rng(3);
        assert_eq!(sample_std_normal_vec(&mut rng, 3).unwrap().len(), 3);
        assert!(sample_std_normal_vec(&mut rng, 0).is_err());
    }

    #[test]
    fn normal_moments() {
        let mut rng = make_rng(99);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.next_std_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.97..1.03).contains(&var), "var {var}");
    }
}
