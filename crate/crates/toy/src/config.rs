use ropelab_core::EncodingConfig;

use crate::{Error, Result};

/// Shape of a toy model plus the encoding it is trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub n_layers: usize,
    /// Feed-forward hidden width as a multiple of `d_model`.
    pub ff_mult: usize,
    pub train_ctx: usize,
    pub encoding: EncodingConfig,
    pub seed: u64,
}

impl ModelConfig {
    /// Name of the feed-forward nonlinearity, recorded in checkpoints.
    pub const ACTIVATION: &'static str = "silu-gated";

    pub fn ff_dim(&self) -> usize {
        self.ff_mult * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab", self.vocab),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("head_dim", self.head_dim),
            ("n_layers", self.n_layers),
            ("ff_mult", self.ff_mult),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.head_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "head_dim must be even, got {}",
                self.head_dim
            )));
        }
        if self.d_model != self.n_heads * self.head_dim {
            return Err(Error::Config(format!(
                "d_model ({}) must equal n_heads ({}) x head_dim ({})",
                self.d_model, self.n_heads, self.head_dim
            )));
        }
        if self.train_ctx < 8 {
            return Err(Error::Config(format!(
                "train_ctx must be at least 8, got {}",
                self.train_ctx
            )));
        }
        if self.encoding.d != self.head_dim {
            return Err(Error::Config(format!(
                "encoding dimension {} does not match head_dim {}",
                self.encoding.d, self.head_dim
            )));
        }
        self.encoding.validate()?;
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let f = self.ff_dim();
        let per_layer = 2 * d + 4 * d * d + 3 * d * f;
        2 * self.vocab * d + d + self.n_layers * per_layer
    }
}
