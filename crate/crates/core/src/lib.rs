//! Deterministic performance predictions for random-feature ridge regression
//! (single-hidden-layer networks with random, untrained first layer).
//!
//! Given data `X` (p x T), targets `Y` (d x T) and an activation `sigma`, the
//! network features are `Sigma = sigma(W X)` for a random `n x p` matrix `W`,
//! and the output layer is fitted by ridge regression with parameter `gamma`.
//! As `n, p, T` grow together, the training and test errors concentrate around
//! deterministic values that depend on the data only through the expected Gram
//! matrix `Phi = E[sigma(w'X)' sigma(w'X)]`.
//!
//! Modules:
//! - [`kernels`]: closed-form and quadrature evaluation of `Phi`.
//! - [`equivalents`]: the `delta` fixed point, `Q_bar`, the `E[QAQ]`
//!   correction, predicted training/test errors and small-`gamma` / large-`n` limits.
//! - [`spectrum`]: the deterministic spectral measure of `Sigma'Sigma / T`.
//! - [`simulator`]: Monte Carlo ground truth (weights, features, ridge fit).
//! - [`harness`]: experiment configuration, gamma sweeps and file outputs.

pub mod equivalents;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod simulator;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result};
