//! Calibration toolkit for probabilistic regression.
//!
//! The centrepiece is a trainable quantile regularizer: the plug-in
//! cumulative KL divergence between a batch of PIT values and
//! `Uniform[0, 1]`, made differentiable with a soft sorting relaxation
//! ([`ckl`], [`softsort`]). Around it sit a small reverse-mode autodiff
//! engine ([`ndgrad`]), heteroscedastic MLPs trained with MC dropout or as
//! adversarial deep ensembles ([`models`]), isotonic post-hoc recalibration
//! ([`recalib`]), calibration metrics ([`metrics`]) and dataset plumbing
//! ([`datasets`]).
//!
//! Numeric code is generic over [`scalar::Real`]; the aliases below fix it
//! to `f64`, which is what every tolerance in the test suite assumes.

pub mod ckl;
pub mod datasets;
pub mod error;
pub mod gaussian;
pub mod metrics;
pub mod models;
pub mod ndgrad;
pub mod recalib;
pub mod scalar;
pub mod softsort;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor = ndgrad::Tensor<f64>;
pub type Tape = ndgrad::Tape<f64>;
pub type GaussianPrediction = gaussian::GaussianPrediction<f64>;
pub type PitSample = gaussian::PitSample<f64>;
pub type SoftSortConfig = softsort::SoftSortConfig<f64>;
pub type CklEstimate = ckl::CklEstimate<f64>;
pub type CalibrationMap = recalib::CalibrationMap<f64>;
pub type MlpParams = models::MlpParams<f64>;
pub type TrainConfig = models::TrainConfig<f64>;
pub type EnsembleConfig = models::EnsembleConfig<f64>;
pub type MetricConfig = metrics::MetricConfig;
