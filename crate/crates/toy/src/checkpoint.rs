//! Checkpoint container.
//!
//! A checkpoint is a single JSON object:
//!
//! ```text
//! {
//!   "format": "ropelab-toy-checkpoint",
//!   "version": 1,
//!   "activation": "silu-gated",
//!   "config": { "vocab": .., "d_model": .., "n_heads": .., "head_dim": ..,
//!               "n_layers": .., "ff_mult": .., "train_ctx": .., "seed": ..,
//!               "encoding": { "<key>": "<value>", .. } },
//!   "tensors": [ { "name": "embed", "shape": [V, D], "data": [..] }, .. ]
//! }
//! ```
//!
//! Encoding entries use the same keys and value syntax as the key-value
//! config format. Tensors are listed in [`ModelParams::tensors`] order,
//! row-major. Floats are written in shortest round-trip form, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use ropelab_core::EncodingConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, ModelConfig, ModelParams, Result, ToyModel};

pub const FORMAT: &str = "ropelab-toy-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ConfigRecord {
    vocab: usize,
    d_model: usize,
    n_heads: usize,
    head_dim: usize,
    n_layers: usize,
    ff_mult: usize,
    train_ctx: usize,
    seed: u64,
    encoding: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    activation: String,
    config: ConfigRecord,
    tensors: Vec<TensorRecord>,
}

pub fn to_json(model: &ToyModel) -> Result<String> {
    let c = &model.config;
    let container = Container {
        format: FORMAT.into(),
        version: VERSION,
        activation: ModelConfig::ACTIVATION.into(),
        config: ConfigRecord {
            vocab: c.vocab,
            d_model: c.d_model,
            n_heads: c.n_heads,
            head_dim: c.head_dim,
            n_layers: c.n_layers,
            ff_mult: c.ff_mult,
            train_ctx: c.train_ctx,
            seed: c.seed,
            encoding: c
                .encoding
                .to_pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        },
        tensors: model
            .params
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| TensorRecord {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&container).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn from_json(text: &str) -> Result<ToyModel> {
    let c: Container =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if c.format != FORMAT {
        return Err(Error::Checkpoint(format!("unexpected format `{}`", c.format)));
    }
    if c.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
    }
    if c.activation != ModelConfig::ACTIVATION {
        return Err(Error::Checkpoint(format!("unsupported activation `{}`", c.activation)));
    }
    let r = c.config;
    let pairs: Vec<(usize, String, String)> = r
        .encoding
        .into_iter()
        .map(|(k, v)| (0, k, v))
        .collect();
    let encoding = EncodingConfig::from_pairs(&pairs)?;
    let config = ModelConfig {
        vocab: r.vocab,
        d_model: r.d_model,
        n_heads: r.n_heads,
        head_dim: r.head_dim,
        n_layers: r.n_layers,
        ff_mult: r.ff_mult,
        train_ctx: r.train_ctx,
        encoding,
        seed: r.seed,
    };
    config.validate()?;
    let mut params = ModelParams::zeros(&config);
    let expected = params.tensors();
    if expected.len() != c.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            c.tensors.len()
        )));
    }
    for ((name, shape, _), t) in expected.iter().zip(&c.tensors) {
        if *name != t.name || *shape != t.shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                t.name, t.shape
            )));
        }
        if t.data.len() != shape.iter().product::<usize>() {
            return Err(Error::Checkpoint(format!("tensor `{name}` has wrong length")));
        }
    }
    let flat: Vec<f64> = c.tensors.into_iter().flat_map(|t| t.data).collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    params.load_flat(&flat)?;
    ToyModel::from_parts(config, params)
}

pub fn save(model: &ToyModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ToyModel> {
    from_json(&std::fs::read_to_string(path)?)
}
