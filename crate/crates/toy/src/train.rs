//! Adam training loop over a stream of examples.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ropelab_core::EncodingConfig;
use serde::{Deserialize, Serialize};

use crate::model::argmax;
use crate::{Error, ModelConfig, ModelParams, Result, ToyModel};

/// One training or evaluation sequence. `targets[j]` is the token expected
/// after `tokens[j]`; `None` positions carry no loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub targets: Vec<Option<u32>>,
}

impl Example {
    /// Plain language-modeling example: every position predicts the next
    /// token and the last one is unscored.
    pub fn next_token(tokens: Vec<u32>) -> Self {
        let mut targets: Vec<Option<u32>> = tokens.iter().skip(1).copied().map(Some).collect();
        targets.push(None);
        Example { tokens, targets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip, if any.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            grad_clip: None,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.grad_clip.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainOptions {
    /// Options for a brief continuation run: a quarter of the steps.
    pub fn continuation(&self) -> TrainOptions {
        TrainOptions {
            steps: (self.steps / 4).max(1),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss at each step, before the update.
    pub losses: Vec<f64>,
    pub final_eval_loss: Option<f64>,
    /// Fraction of evaluation examples whose every scored target is the
    /// greedy prediction.
    pub eval_accuracy: Option<f64>,
    pub steps: usize,
    pub wall_time_secs: f64,
    pub seed: u64,
    pub options: TrainOptions,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Loss and exact-match accuracy on a held-out set, at the positions the
/// given encoding assigns at inference.
pub fn evaluate(
    model: &ToyModel,
    examples: &[Example],
    encoding: &EncodingConfig,
) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::Input("empty evaluation set".into()));
    }
    let mut nll = 0.0;
    let mut count = 0usize;
    let mut hits = 0usize;
    for ex in examples {
        let logits = model.forward(&ex.tokens, encoding)?;
        let mut all = true;
        for (j, t) in ex.targets.iter().enumerate() {
            if let Some(t) = *t {
                let row = logits.row(j);
                if argmax(row.iter().copied()) != t as usize {
                    all = false;
                }
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                nll += lse - row[t as usize];
                count += 1;
            }
        }
        if all {
            hits += 1;
        }
    }
    if count == 0 {
        return Err(Error::Input("evaluation set has no targets".into()));
    }
    Ok((nll / count as f64, hits as f64 / examples.len() as f64))
}

struct Adam {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: OptimizerConfig, len: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.t += 1;
        let c = self.cfg;
        let clip = match c.grad_clip {
            Some(max) => {
                let norm = grads.norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let mut offset = 0;
        for (p, (_, _, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
            offset += p.len();
        }
    }
}

/// Training aborts once the mean loss exceeds this multiple of `ln(vocab)`.
pub const DIVERGENCE_FACTOR: f64 = 100.0;

/// Trains a freshly initialized model. `batches(step, batch_size)` supplies
/// the examples for each step; `eval` is scored once at the end.
pub fn train<F>(
    config: ModelConfig,
    batches: F,
    eval: &[Example],
    options: &TrainOptions,
) -> Result<(ToyModel, TrainReport)>
where
    F: FnMut(usize, usize) -> Vec<Example>,
{
    let mut model = ToyModel::new(config)?;
    let report = train_model(&mut model, batches, eval, options)?;
    Ok((model, report))
}

/// Continues training `model` with a different encoding. The model's
/// config is updated to the new encoding.
pub fn continue_training<F>(
    model: &mut ToyModel,
    encoding: EncodingConfig,
    batches: F,
    eval: &[Example],
    options: &TrainOptions,
) -> Result<TrainReport>
where
    F: FnMut(usize, usize) -> Vec<Example>,
{
    let mut config = model.config.clone();
    config.encoding = encoding;
    config.validate()?;
    model.config = config;
    train_model(model, batches, eval, options)
}

/// Runs `options.steps` Adam updates on `model` in place.
pub fn train_model<F>(
    model: &mut ToyModel,
    mut batches: F,
    eval: &[Example],
    options: &TrainOptions,
) -> Result<TrainReport>
where
    F: FnMut(usize, usize) -> Vec<Example>,
{
    options.optimizer.validate()?;
    if options.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let start = Instant::now();
    let encoding = model.config.encoding.clone();
    // Separate stream for randomized training positions.
    let mut pos_rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5eed_0f_9a95);
    let mut adam = Adam::new(options.optimizer, model.params.len());
    let mut losses = Vec::with_capacity(options.steps);
    // A loss this far above the uniform guess only comes from runaway
    // weights.
    let explosion = DIVERGENCE_FACTOR * (model.config.vocab.max(2) as f64).ln();
    for step in 0..options.steps {
        let batch = batches(step, options.batch_size);
        if batch.is_empty() {
            return Err(Error::Input(format!("empty batch at step {step}")));
        }
        let mut grads = ModelParams::zeros(&model.config);
        let mut sum = 0.0;
        let mut count = 0;
        for ex in &batch {
            let schedule = encoding.train_schedule(ex.tokens.len(), &mut pos_rng)?;
            let (s, c) =
                model.accumulate_gradients(&ex.tokens, &ex.targets, &schedule, &encoding, &mut grads)?;
            sum += s;
            count += c;
        }
        if count == 0 {
            return Err(Error::Input(format!("batch at step {step} has no targets")));
        }
        let loss = sum / count as f64;
        if !loss.is_finite() || !grads.is_finite() || loss > explosion {
            return Err(Error::Divergence { step, loss });
        }
        grads.scale(1.0 / count as f64);
        adam.step(&mut model.params, &grads);
        losses.push(loss);
    }
    let (final_eval_loss, eval_accuracy) = if eval.is_empty() {
        (None, None)
    } else {
        let enc = encoding.with_eval_scale(encoding.scale.train_scale);
        let (l, a) = evaluate(model, eval, &enc)?;
        (Some(l), Some(a))
    };
    Ok(TrainReport {
        losses,
        final_eval_loss,
        eval_accuracy,
        steps: options.steps,
        wall_time_secs: start.elapsed().as_secs_f64(),
        seed: model.config.seed,
        options: *options,
    })
}
