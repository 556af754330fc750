//! Coin-flipping classifiers and majority amplification.
//!
//! A coin-flipping network answers each query with a random label; sampling
//! it `n` times and taking the majority amplifies any per-sample edge over
//! 1/2 into near-certainty. This crate implements the closed-form randomized
//! classifiers for the d-dimensional ball, cone-classifier distributions for
//! Lipschitz separation, the Hoeffding/MSE sample-size calculators that make
//! the amplification quantitative, and a small differentiable framework for
//! training such networks against their majority behavior.
//!
//! All randomness flows through explicit, splittable [`numerics::RngStream`]
//! values, so every result in the crate is reproducible from a seed.

pub mod amplify;
pub mod ball;
pub mod cone;
pub mod error;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
