//! Rate-delay tradeoffs for joint communication and quickest change detection.
//!
//! A single transmitted codeword carries a message over a state-independent
//! channel while a second receiver, which knows the codeword, watches a
//! state-dependent channel for an abrupt change. This crate computes the
//! achievable (rate, delay-slope) region, builds constant subblock-composition
//! codebooks, runs the subblock CuSum detector, and estimates false-alarm rate
//! and worst-case delay by Monte Carlo.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`prob`] | entropy, KL divergence, mutual information, per-symbol sensing cost |
//! | [`channels`] | discrete, scalar Gaussian and MIMO Gaussian sensing models |
//! | [`cscc`] | subblock types, codebook generation, rate penalty, window typicality |
//! | [`detectors`] | CuSum, subblock CuSum, multi-state CuSum, one-sided SPRT |
//! | [`tradeoff`] | cost-constrained Blahut-Arimoto, region sweeps, Gaussian regions |
//! | [`simulator`] | false-alarm and delay estimation, slope fits, ML decoding |
//!
//! All information quantities are in nats.

// `!(x > 0.0)` is used on purpose to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cscc;
pub mod detectors;
mod error;
mod par;
pub mod prob;
pub mod rng;
pub mod simulator;
pub mod tradeoff;

pub use error::{Error, Result};
pub use prob::{ChannelMatrix, Distribution, ExtReal};
