//! Deterministic randomness and the special functions everything else
//! builds on.

pub mod rng;
pub mod special;

pub use rng::{make_rng, sample_bernoulli, sample_std_normal_vec, split_stream, RngStream};
pub use special::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
