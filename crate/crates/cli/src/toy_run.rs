//! Toy retrieval experiments: configuration, training data and eval sets.
//!
//! Training sequences hold several queries each (see
//! [`ropelab_tasks::toy::gen_toy_recall`]); evaluation prompts hold one
//! query at the end, the layout `gen` writes for `toy-retrieval`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ropelab_core::{EncodingConfig, Scheme};
use ropelab_tasks::toy::{gen_toy_recall, gen_toy_retrieval, ToyVocab};
use ropelab_toy::train::continue_training;
use ropelab_toy::{train, Example, ModelConfig, OptimizerConfig, ToyModel, TrainOptions, TrainReport};

use crate::encoding::take_encoding;
use crate::exit::usage;
use crate::settings::Settings;

const DATA_STREAM: u64 = 0xda7a_57ea;
const EVAL_STREAM: u64 = 0xe7a1_57ea;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainData {
    /// Multi-query key-value recall.
    Recall,
    /// One token repeated; a smoke test of the training loop.
    Constant,
}

impl fmt::Display for TrainData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainData::Recall => "recall",
            TrainData::Constant => "constant",
        })
    }
}

impl FromStr for TrainData {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "recall" => Ok(TrainData::Recall),
            "constant" => Ok(TrainData::Constant),
            other => Err(format!("unknown training data `{other}` (recall, constant)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRunConfig {
    pub seed: u64,
    pub d_model: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub n_layers: usize,
    pub ff_mult: usize,
    pub train_ctx: usize,
    pub encoding: EncodingConfig,
    pub data: TrainData,
    pub n_keys: u32,
    pub n_values: u32,
    /// Fewest key-value pairs in a training sequence.
    pub min_pairs: usize,
    /// Shortest training sequence; lengths are uniform up to `train_ctx`.
    pub min_len: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Held-out prompts scored at the end of training.
    pub eval_count: usize,
    /// Scheme for a short second phase of training, if any.
    pub continue_scheme: Option<Scheme>,
    /// Length of that phase; a quarter of `steps` when unset.
    pub continue_steps: Option<usize>,
}

impl Default for ToyRunConfig {
    /// The extrapolation experiment: context 128, positions trained at
    /// linear scale 2.
    fn default() -> Self {
        ToyRunConfig {
            seed: 0,
            d_model: 32,
            n_heads: 2,
            head_dim: 16,
            n_layers: 2,
            ff_mult: 2,
            train_ctx: 128,
            encoding: EncodingConfig::new(Scheme::Rope, 16).with_scale(2.0, 2.0),
            data: TrainData::Recall,
            n_keys: 128,
            n_values: 16,
            min_pairs: 1,
            min_len: 10,
            steps: 8000,
            batch_size: 16,
            optimizer: OptimizerConfig {
                lr: 2e-3,
                grad_clip: Some(1.0),
                ..OptimizerConfig::default()
            },
            eval_count: 100,
            continue_scheme: None,
            continue_steps: None,
        }
    }
}

/// Encoding keys a toy run accepts; `d` follows `head_dim` and `seed` is
/// the run seed.
const SKIPPED_ENCODING_KEYS: [&str; 2] = ["d", "seed"];

impl ToyRunConfig {
    /// Defaults overridden by `s`, which must hold no other keys.
    pub fn from_settings(mut s: Settings) -> Result<Self> {
        let mut c = ToyRunConfig::default();
        c.seed = s.take_or("seed", c.seed)?;
        c.d_model = s.take_or("d_model", c.d_model)?;
        c.n_heads = s.take_or("n_heads", c.n_heads)?;
        c.head_dim = s.take_or("head_dim", c.head_dim)?;
        c.n_layers = s.take_or("n_layers", c.n_layers)?;
        c.ff_mult = s.take_or("ff_mult", c.ff_mult)?;
        c.train_ctx = s.take_or("train_ctx", c.train_ctx)?;
        c.data = s.take_or("data", c.data)?;
        c.n_keys = s.take_or("n_keys", c.n_keys)?;
        c.n_values = s.take_or("n_values", c.n_values)?;
        c.min_pairs = s.take_or("min_pairs", c.min_pairs)?;
        c.min_len = s.take_or("min_len", c.min_len)?;
        c.steps = s.take_or("steps", c.steps)?;
        c.batch_size = s.take_or("batch_size", c.batch_size)?;
        c.optimizer.lr = s.take_or("lr", c.optimizer.lr)?;
        c.optimizer.beta1 = s.take_or("beta1", c.optimizer.beta1)?;
        c.optimizer.beta2 = s.take_or("beta2", c.optimizer.beta2)?;
        c.optimizer.eps = s.take_or("adam_eps", c.optimizer.eps)?;
        if let Some(clip) = s.take::<String>("grad_clip")? {
            c.optimizer.grad_clip = match clip.as_str() {
                "none" => None,
                v => Some(v.parse().map_err(|_| usage(format!("bad grad_clip `{v}`")))?),
            };
        }
        c.eval_count = s.take_or("eval_count", c.eval_count)?;
        c.continue_scheme = s.take("continue_scheme")?;
        c.continue_steps = s.take("continue_steps")?;
        c.encoding.d = c.head_dim;
        take_encoding(&mut s, &mut c.encoding, &SKIPPED_ENCODING_KEYS)?;
        c.encoding.seed = c.seed;
        s.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate().map_err(|e| usage(e.to_string()))?;
        if self.data == TrainData::Recall {
            let shortest = 2 * self.min_pairs.max(1) + 3;
            if self.min_len < shortest || self.min_len > self.train_ctx {
                bail!(usage(format!(
                    "min_len must lie in [{shortest}, train_ctx = {}], got {}",
                    self.train_ctx, self.min_len
                )));
            }
            if (self.train_ctx / 5).max(self.min_pairs) > self.n_keys as usize {
                bail!(usage("n_keys too small for the longest training sequence"));
            }
        }
        if self.n_values == 0 {
            bail!(usage("n_values must be positive"));
        }
        Ok(())
    }

    pub fn vocab(&self) -> ToyVocab {
        ToyVocab {
            n_keys: self.n_keys,
            n_values: self.n_values,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vocab: self.vocab().size(),
            d_model: self.d_model,
            n_heads: self.n_heads,
            head_dim: self.head_dim,
            n_layers: self.n_layers,
            ff_mult: self.ff_mult,
            train_ctx: self.train_ctx,
            encoding: self.encoding.clone(),
            seed: self.seed,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            steps: self.steps,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
        }
    }

    /// Every setting as config-file keys; feeding this map back through
    /// [`ToyRunConfig::from_settings`] reproduces the config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let o = &self.optimizer;
        let mut m: BTreeMap<String, String> = [
            ("seed", self.seed.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("head_dim", self.head_dim.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("ff_mult", self.ff_mult.to_string()),
            ("train_ctx", self.train_ctx.to_string()),
            ("data", self.data.to_string()),
            ("n_keys", self.n_keys.to_string()),
            ("n_values", self.n_values.to_string()),
            ("min_pairs", self.min_pairs.to_string()),
            ("min_len", self.min_len.to_string()),
            ("steps", self.steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", o.lr.to_string()),
            ("beta1", o.beta1.to_string()),
            ("beta2", o.beta2.to_string()),
            ("adam_eps", o.eps.to_string()),
            ("grad_clip", o.grad_clip.map_or("none".into(), |c| c.to_string())),
            ("eval_count", self.eval_count.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        if let Some(s) = self.continue_scheme {
            m.insert("continue_scheme".into(), s.to_string());
        }
        if let Some(n) = self.continue_steps {
            m.insert("continue_steps".into(), n.to_string());
        }
        for (k, v) in self.encoding.to_pairs() {
            if !SKIPPED_ENCODING_KEYS.contains(&k) {
                m.insert(k.to_string(), v);
            }
        }
        m
    }

    fn training_example(&self, rng: &mut ChaCha8Rng) -> Result<Example> {
        Ok(match self.data {
            TrainData::Recall => {
                let len = rng.random_range(self.min_len..=self.train_ctx);
                let r = gen_toy_recall(len, self.min_pairs, &self.vocab(), rng)?;
                Example {
                    tokens: r.tokens,
                    targets: r.targets,
                }
            }
            TrainData::Constant => Example::next_token(vec![self.vocab().key(0); self.train_ctx]),
        })
    }

    /// Held-out single-query prompts filling `ctx` tokens, drawn from a
    /// stream separate from the training data.
    pub fn eval_examples(&self, ctx: usize, count: usize) -> Result<Vec<Example>> {
        if self.data == TrainData::Constant {
            return Ok(vec![Example::next_token(vec![self.vocab().key(0); ctx]); count]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ EVAL_STREAM ^ ctx as u64);
        let pairs = ToyVocab::pairs_for_context(ctx).max(1);
        (0..count)
            .map(|_| {
                let r = gen_toy_retrieval(pairs, &self.vocab(), &mut rng)?;
                Ok(Example {
                    targets: r.targets(),
                    tokens: r.tokens,
                })
            })
            .collect()
    }

    pub fn run(&self) -> Result<ToyRun> {
        let eval = self.eval_examples(self.train_ctx, self.eval_count)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ DATA_STREAM);
        let mut failure = None;
        let mut batches = |_: usize, b: usize| -> Vec<Example> {
            (0..b)
                .filter_map(|_| match self.training_example(&mut rng) {
                    Ok(e) => Some(e),
                    Err(e) => {
                        failure.get_or_insert(e);
                        None
                    }
                })
                .collect()
        };
        let opts = self.train_options();
        let (mut model, report) = train(self.model_config(), &mut batches, &eval, &opts)?;
        let continuation = match self.continue_scheme {
            None => None,
            Some(scheme) => {
                let mut enc = self.encoding.clone();
                enc.scheme = scheme;
                let copts = match self.continue_steps {
                    Some(steps) => TrainOptions { steps, ..opts },
                    None => opts.continuation(),
                };
                Some(continue_training(&mut model, enc, &mut batches, &eval, &copts)?)
            }
        };
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(ToyRun {
            model,
            report,
            continuation,
        })
    }
}

pub struct ToyRun {
    pub model: ToyModel,
    pub report: TrainReport,
    pub continuation: Option<TrainReport>,
}
