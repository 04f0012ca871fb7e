//! Online sequence phase labeling with a causally masked self-attention
//! encoder, trained against a frozen frame-wise backbone whose per-frame
//! confidence also prices the attention mass of the first layer.
//!
//! The crate is self-contained: a double-precision tape autodiff engine
//! ([`tape`]), the encoder stack ([`model`]), the combined objective
//! ([`loss`]), a seeded synthetic data generator standing in for real video
//! datasets ([`synth`]), and the training/evaluation harness ([`train`],
//! [`metrics`]).

pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
mod seeds;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Deterministic seed mixing, shared by fold workers and callers that need
/// derived streams.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    seeds::mix(a, b)
}
