//! Divergence-based censoring regularization for subject-transfer
//! classification: three estimators (adversarial classifier, density-ratio
//! MI estimator, Wasserstein-1 critic) in three censoring modes (marginal,
//! conditional, complementary), with synthetic generative models for
//! validation, an alternating-optimization trainer, and a leave-subjects-out
//! evaluation harness.

pub mod censor;
pub mod error;
pub mod io;
pub mod model;
pub mod nn;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::Error;
