//! Positional-encoding laboratory core.
//!
//! [`encoding`] builds rotary frequency bases (standard, power-reshaped and
//! truncated) and the position schedules fed to them (linear, rescaled and
//! randomized), plus xPos decay amplitudes. [`attention`] applies them to
//! query/key heads and computes causal attention. [`config`] holds the
//! flat `key = value` encoding configuration shared by every tool.

pub mod attention;
pub mod config;
pub mod encoding;
mod error;

pub use config::{EncodingConfig, Scheme};
pub use error::{Error, Result};
