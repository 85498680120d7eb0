//! Encoding flags shared by the toy and plotting subcommands.

use std::collections::BTreeMap;

use anyhow::Result;
use clap::Args;
use ropelab_core::EncodingConfig;

use crate::settings::Settings;

#[derive(Debug, Clone, Default, Args)]
pub struct EncodingFlags {
    /// rope, power, truncated, randomized or xpos.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Training-time linear position scale.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Inference-time linear position scale.
    #[arg(long)]
    pub eval_scale: Option<f64>,
    #[arg(long)]
    pub power_k: Option<f64>,
    #[arg(long)]
    pub trunc_a: Option<f64>,
    #[arg(long)]
    pub trunc_b: Option<f64>,
    #[arg(long)]
    pub trunc_rho: Option<f64>,
    /// Smallest gap of randomized training positions.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl EncodingFlags {
    pub fn apply(&self, s: &mut Settings) {
        s.flag("scheme", self.scheme.clone());
        s.flag("scale_train", self.scale);
        s.flag("scale_eval", self.eval_scale);
        s.flag("power_k", self.power_k);
        s.flag("trunc_a", self.trunc_a);
        s.flag("trunc_b", self.trunc_b);
        s.flag("trunc_rho", self.trunc_rho);
        s.flag("rand_epsilon", self.epsilon);
    }
}

/// Moves every encoding key out of `s` into `enc`. Keys listed in `skip`
/// are left for the caller.
pub fn take_encoding(s: &mut Settings, enc: &mut EncodingConfig, skip: &[&str]) -> Result<()> {
    let keys: Vec<&str> = EncodingConfig::keys()
        .iter()
        .copied()
        .filter(|k| !skip.contains(k))
        .collect();
    let train_only = s.contains("scale_train") && !s.contains("scale_eval");
    s.drain_into(&keys, |k, v| enc.set(k, v).map_err(|e| e.to_string()))?;
    // A training scale given alone also sets the inference scale.
    if train_only {
        enc.scale.eval_scale = enc.scale.train_scale;
    }
    Ok(())
}

/// Flat string map for manifests and checkpoints.
pub fn encoding_map(enc: &EncodingConfig) -> BTreeMap<String, String> {
    enc.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
