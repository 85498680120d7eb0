use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, ModelConfig, Result};

/// Weights of one pre-norm transformer block. Projections act on row
/// vectors: `y = x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub attn_norm: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ffn_norm: Array1<f64>,
    pub w_gate: Array2<f64>,
    pub w_up: Array2<f64>,
    pub w_down: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed: Array2<f64>,
    pub layers: Vec<Layer>,
    pub final_norm: Array1<f64>,
    pub w_out: Array2<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let f = config.ff_dim();
        let layer = Layer {
            attn_norm: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            ffn_norm: Array1::zeros(d),
            w_gate: Array2::zeros((d, f)),
            w_up: Array2::zeros((d, f)),
            w_down: Array2::zeros((f, d)),
        };
        ModelParams {
            embed: Array2::zeros((config.vocab, d)),
            layers: vec![layer; config.n_layers],
            final_norm: Array1::zeros(d),
            w_out: Array2::zeros((d, config.vocab)),
        }
    }

    /// Seeded initialization: unit-variance embeddings, `1/√fan_in` for
    /// input projections, residual-output projections further divided by
    /// `√(2 · n_layers)`, norm gains at 1.
    pub fn init(config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let f = config.ff_dim();
        let in_std = 1.0 / (d as f64).sqrt();
        let resid = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let embed = gaussian(&mut rng, config.vocab, d, 1.0);
        let layers = (0..config.n_layers)
            .map(|_| Layer {
                attn_norm: Array1::ones(d),
                wq: gaussian(&mut rng, d, d, in_std),
                wk: gaussian(&mut rng, d, d, in_std),
                wv: gaussian(&mut rng, d, d, in_std),
                wo: gaussian(&mut rng, d, d, in_std * resid),
                ffn_norm: Array1::ones(d),
                w_gate: gaussian(&mut rng, d, f, in_std),
                w_up: gaussian(&mut rng, d, f, in_std),
                w_down: gaussian(&mut rng, f, d, resid / (f as f64).sqrt()),
            })
            .collect();
        let w_out = gaussian(&mut rng, d, config.vocab, in_std);
        ModelParams {
            embed,
            layers,
            final_norm: Array1::ones(d),
            w_out,
        }
    }

    /// `(name, shape, values)` for every tensor in a fixed order.
    pub fn tensors<'a>(&'a self) -> Vec<(String, Vec<usize>, &'a [f64])> {
        fn two(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn one(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let mut push = |name: String, (shape, data): (Vec<usize>, &'a [f64])| {
            out.push((name, shape, data));
        };
        push("embed".into(), two(&self.embed));
        for (l, layer) in self.layers.iter().enumerate() {
            push(format!("layers.{l}.attn_norm"), one(&layer.attn_norm));
            push(format!("layers.{l}.wq"), two(&layer.wq));
            push(format!("layers.{l}.wk"), two(&layer.wk));
            push(format!("layers.{l}.wv"), two(&layer.wv));
            push(format!("layers.{l}.wo"), two(&layer.wo));
            push(format!("layers.{l}.ffn_norm"), one(&layer.ffn_norm));
            push(format!("layers.{l}.w_gate"), two(&layer.w_gate));
            push(format!("layers.{l}.w_up"), two(&layer.w_up));
            push(format!("layers.{l}.w_down"), two(&layer.w_down));
        }
        push("final_norm".into(), one(&self.final_norm));
        push("w_out".into(), two(&self.w_out));
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn s2(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        fn s1(a: &mut Array1<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out = vec![s2(&mut self.embed)];
        for layer in &mut self.layers {
            out.push(s1(&mut layer.attn_norm));
            out.push(s2(&mut layer.wq));
            out.push(s2(&mut layer.wk));
            out.push(s2(&mut layer.wv));
            out.push(s2(&mut layer.wo));
            out.push(s1(&mut layer.ffn_norm));
            out.push(s2(&mut layer.w_gate));
            out.push(s2(&mut layer.w_up));
            out.push(s2(&mut layer.w_down));
        }
        out.push(s1(&mut self.final_norm));
        out.push(s2(&mut self.w_out));
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.len());
        for (_, _, data) in self.tensors() {
            flat.extend_from_slice(data);
        }
        flat
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Input(format!(
                "flat parameter vector has {} values, model needs {}",
                flat.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += other` elementwise.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (dst, (_, _, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, _, d)| d.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ropelab_core::{EncodingConfig, Scheme};

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab: 10,
            d_model: 8,
            n_heads: 2,
            head_dim: 4,
            n_layers: 2,
            ff_mult: 2,
            train_ctx: 8,
            encoding: EncodingConfig::new(Scheme::Rope, 4),
            seed: 4,
        }
    }

    #[test]
    fn count_matches_config() {
        let c = cfg();
        let p = ModelParams::init(&c);
        assert_eq!(p.len(), c.parameter_count());
        assert_eq!(p.to_flat().len(), p.len());
    }

    #[test]
    fn flat_roundtrip_and_seeding() {
        let c = cfg();
        let p = ModelParams::init(&c);
        assert_eq!(p, ModelParams::init(&c));
        let mut q = ModelParams::zeros(&c);
        q.load_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.load_flat(&[1.0]).is_err());
    }

    #[test]
    fn add_and_scale() {
        let c = cfg();
        let p = ModelParams::init(&c);
        let mut acc = ModelParams::zeros(&c);
        acc.add_assign(&p);
        acc.add_assign(&p);
        acc.scale(0.5);
        assert_eq!(acc, p);
    }
}
