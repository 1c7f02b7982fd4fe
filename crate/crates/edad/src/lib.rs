//! Encode-then-decompose anomaly detection for time series.
//!
//! The pipeline: a multivariate series is split into univariate channels,
//! standardized, and cut into overlapping windows. An attention encoder maps
//! each window to a per-timestamp latent matrix, which a decomposer splits
//! into a shuffle-insensitive (stable) half and a shuffle-sensitive
//! (auxiliary) half. Training combines two reconstruction losses, a
//! variational mutual-information term with a learned critic, and a
//! teacher-student consistency regularizer. Anomaly scores are the negated
//! point-wise mutual information between the full latent and its auxiliary
//! half, so the model can be trained on contaminated data and still score
//! point-level oddities.
//!
//! Modules follow the pipeline: [`numerics`] (tensors, reverse-mode
//! gradients, Adam, checkpoints), [`data`] (ingestion, windowing, synthetic
//! anomaly injection), [`encoder`], [`decomposer`], [`mi`] (critics and
//! estimators), [`trainer`], [`scoring`], [`metrics`], and [`cli`].

pub mod cli;
pub mod data;
pub mod decomposer;
pub mod encoder;
mod error;
pub mod metrics;
pub mod mi;
pub mod numerics;
pub mod scoring;
pub mod trainer;

pub use error::{Error, Result};
