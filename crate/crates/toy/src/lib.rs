//! Desk-scale decoder-only transformer for extrapolation experiments.
//!
//! Pre-norm blocks with RMS normalization, rotary multi-head causal
//! attention and a SiLU-gated feed-forward, trained with Adam. Every
//! gradient is derived by hand in [`model`]; there is no autodiff.

pub mod checkpoint;
mod config;
mod error;
pub mod model;
mod params;
pub mod train;

pub use config::ModelConfig;
pub use error::{Error, Result};
pub use model::{loss, ToyModel};
pub use params::ModelParams;
pub use train::{evaluate, train, Example, OptimizerConfig, TrainOptions, TrainReport};
