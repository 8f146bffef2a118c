//! Residual-network surrogates of chaotic ODE update maps, controlled at
//! inference time by layer-wise nudging feedback.
//!
//! * [`nn`] dense ResNets, traced forward passes, reverse-mode gradients, model files
//! * [`training`] regularized least-squares training with full-batch BFGS
//! * [`dynamics`] Lorenz 63 / Lorenz 96, RK4, training and reference data
//! * [`assimilation`] classic nudging, NINN feedback steps, Direct Observation
//! * [`eval`] RMSE metric and the multi-run comparison protocol
//! * [`cli`] the `ninn` pipeline driver

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assimilation;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod training;

pub use error::{NinnError, Result};
