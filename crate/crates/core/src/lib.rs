//! Rank-pooled dynamic images and a small CNN classifier.
//!
//! The pipeline turns windows of video frames into single "dynamic images"
//! by learning a linear ranking function over the time-averaged frames, then
//! classifies those images as [`dataset::Label::Ruminating`] or
//! [`dataset::Label::Other`].
//!
//! Modules follow the data flow:
//!
//! - [`preprocess`]: frame decoding and pixel transforms
//! - [`rankpool`]: the ranking energy, its subgradient, and the pooling solvers
//! - [`dataset`]: windowing, manifests, splits, folds, synthetic clips
//! - [`model`]: the CNN, Adam, the learning-rate schedule, training
//! - [`eval`]: confusion matrices, ROC/AUC, cross-validation summaries
//! - [`cli`]: configuration and the `synth`/`pool`/`train`/`eval`/`crossval` commands

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod preprocess;
pub mod rankpool;
pub mod rng;

pub use error::{Error, Result};
