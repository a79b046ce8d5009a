//! Distributed estimation by retraining on parametric bootstrap samples.
//!
//! Each of `m` machines fits a model on its own shard; a central server then
//! draws synthetic samples from every local model, pools them and refits
//! once. The crate implements that aggregator for canonical-link GLMs and
//! for noisy real phase retrieval, together with the usual one-shot
//! competitors (parameter averaging, SAVGM, CSL) and a Monte-Carlo driver
//! that measures their MSE and bias.

pub mod aggregate;
pub mod glm;
pub mod numerics;
pub mod phase_retrieval;
pub mod sim;

pub use numerics::{DenseMatrix, DenseVector, SeededRng};
