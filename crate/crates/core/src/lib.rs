//! Video caption generation from diverse video features.
//!
//! Several two-channel residual LSTM caption generators are trained on
//! different feature pairs; a convolutional caption/video evaluator then
//! picks the best caption from the pooled candidates.

pub mod binfmt;
pub mod checkpoint;
pub mod decoder;
pub mod ensemble;
pub mod error;
pub mod evaluator;
pub mod features;
pub mod generation;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod text;

pub use error::{Error, Result};
