//! Forward pass, cross-entropy and the hand-derived backward pass.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ropelab_core::attention::{rotated_scores, softmax_rows, RotaryTable};
use ropelab_core::encoding::{PositionSchedule, Precision, XPosParams};
use ropelab_core::EncodingConfig;

use crate::{Error, ModelConfig, ModelParams, Result};

const NORM_EPS: f64 = 1e-6;

/// A configuration together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

struct LayerCache {
    x_in: Array2<f64>,
    rinv1: Array1<f64>,
    h1: Array2<f64>,
    v: Array2<f64>,
    rq: Array2<f64>,
    rk: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    x_mid: Array2<f64>,
    rinv2: Array1<f64>,
    h2: Array2<f64>,
    gate: Array2<f64>,
    up: Array2<f64>,
    act: Array2<f64>,
}

struct Cache {
    layers: Vec<LayerCache>,
    x_final: Array2<f64>,
    rinv_f: Array1<f64>,
    h_final: Array2<f64>,
    table: RotaryTable,
    positions: Vec<f64>,
    xpos: Option<XPosParams>,
}

fn rmsnorm(x: &Array2<f64>, gain: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let rinv = x.map_axis(Axis(1), |row| {
        1.0 / (row.iter().map(|v| v * v).sum::<f64>() / d + NORM_EPS).sqrt()
    });
    let mut y = x.clone();
    for (mut row, r) in y.rows_mut().into_iter().zip(&rinv) {
        for (v, g) in row.iter_mut().zip(gain) {
            *v *= r * g;
        }
    }
    (y, rinv)
}

/// Returns `dx` and accumulates into `dgain`.
fn rmsnorm_back(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    rinv: &Array1<f64>,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
) -> Array2<f64> {
    let d = x.ncols() as f64;
    let mut dx = Array2::zeros(x.raw_dim());
    for j in 0..x.nrows() {
        let r = rinv[j];
        let mut dot = 0.0;
        for c in 0..x.ncols() {
            let gy = dy[[j, c]] * gain[c];
            dot += gy * x[[j, c]];
            dgain[c] += dy[[j, c]] * x[[j, c]] * r;
        }
        let coef = r * r * r * dot / d;
        for c in 0..x.ncols() {
            dx[[j, c]] = r * dy[[j, c]] * gain[c] - x[[j, c]] * coef;
        }
    }
    dx
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Mean natural-log negative log-likelihood over rows that carry a target.
pub fn loss(logits: &Array2<f64>, targets: &[Option<u32>]) -> Result<f64> {
    let (sum, count) = nll_sum(logits, targets)?;
    if count == 0 {
        return Err(Error::Input("no targets to score".into()));
    }
    Ok(sum / count as f64)
}

fn nll_sum(logits: &Array2<f64>, targets: &[Option<u32>]) -> Result<(f64, usize)> {
    if targets.len() != logits.nrows() {
        return Err(Error::Input(format!(
            "{} targets for {} logit rows",
            targets.len(),
            logits.nrows()
        )));
    }
    let vocab = logits.ncols();
    let mut sum = 0.0;
    let mut count = 0;
    for (row, t) in logits.rows().into_iter().zip(targets) {
        let Some(t) = *t else { continue };
        let t = t as usize;
        if t >= vocab {
            return Err(Error::Input(format!("target {t} outside vocabulary of {vocab}")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        sum += lse - row[t];
        count += 1;
    }
    Ok((sum, count))
}

impl ToyModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Ok(ToyModel { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let expect = ModelParams::zeros(&config);
        let shapes = |p: &ModelParams| -> Vec<Vec<usize>> {
            p.tensors().into_iter().map(|(_, s, _)| s).collect()
        };
        if shapes(&expect) != shapes(&params) {
            return Err(Error::Config("parameter shapes do not match config".into()));
        }
        Ok(ToyModel { config, params })
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Input("empty token sequence".into()));
        }
        if let Some(t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab) {
            return Err(Error::Input(format!(
                "token {t} outside vocabulary of {}",
                self.config.vocab
            )));
        }
        Ok(())
    }

    /// Next-token logits (`n × vocab`) at inference-time positions of
    /// `encoding`. Only the encoding's inference fields matter here, so a
    /// rescaled copy of the training encoding acts as a zero-shot override.
    pub fn forward(&self, tokens: &[u32], encoding: &EncodingConfig) -> Result<Array2<f64>> {
        self.check_tokens(tokens)?;
        let schedule = encoding.eval_schedule(tokens.len())?;
        self.forward_at(tokens, &schedule, encoding)
    }

    /// Forward pass at explicit positions.
    pub fn forward_at(
        &self,
        tokens: &[u32],
        schedule: &PositionSchedule,
        encoding: &EncodingConfig,
    ) -> Result<Array2<f64>> {
        let (logits, _) = self.forward_cached(tokens, schedule, encoding)?;
        Ok(logits)
    }

    /// Logits for several independent sequences.
    pub fn forward_batch(
        &self,
        batch: &[Vec<u32>],
        encoding: &EncodingConfig,
    ) -> Result<Vec<Array2<f64>>> {
        batch.iter().map(|t| self.forward(t, encoding)).collect()
    }

    fn forward_cached(
        &self,
        tokens: &[u32],
        schedule: &PositionSchedule,
        encoding: &EncodingConfig,
    ) -> Result<(Array2<f64>, Cache)> {
        self.check_tokens(tokens)?;
        if schedule.len() != tokens.len() {
            return Err(Error::Input(format!(
                "{} positions for {} tokens",
                schedule.len(),
                tokens.len()
            )));
        }
        if encoding.d != self.config.head_dim {
            return Err(Error::Config(format!(
                "encoding dimension {} does not match head_dim {}",
                encoding.d, self.config.head_dim
            )));
        }
        let p = &self.params;
        let n = tokens.len();
        let d = self.config.d_model;
        let hd = self.config.head_dim;
        let basis = encoding.basis()?;
        let table = RotaryTable::new(schedule, &basis);
        let xpos = encoding.xpos()?;
        let positions = schedule.positions().to_vec();

        let mut x = Array2::zeros((n, d));
        for (j, &t) in tokens.iter().enumerate() {
            x.row_mut(j).assign(&p.embed.row(t as usize));
        }

        let mut layers = Vec::with_capacity(p.layers.len());
        for layer in &p.layers {
            let x_in = x;
            let (h1, rinv1) = rmsnorm(&x_in, &layer.attn_norm);
            let q = h1.dot(&layer.wq);
            let k = h1.dot(&layer.wk);
            let v = h1.dot(&layer.wv);
            let mut rq = Array2::zeros((n, d));
            let mut rk = Array2::zeros((n, d));
            let mut attn = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(self.config.n_heads);
            for h in 0..self.config.n_heads {
                let cols = s![.., h * hd..(h + 1) * hd];
                let rq_h = table.rotate(q.slice(cols))?;
                let rk_h = table.rotate(k.slice(cols))?;
                let raw = rotated_scores(rq_h.view(), rk_h.view(), &positions, xpos.as_ref(), true)?;
                let prob = softmax_rows(&raw)?.into_inner();
                attn.slice_mut(cols).assign(&prob.dot(&v.slice(cols)));
                rq.slice_mut(cols).assign(&rq_h);
                rk.slice_mut(cols).assign(&rk_h);
                probs.push(prob);
            }
            let x_mid = &x_in + &attn.dot(&layer.wo);
            let (h2, rinv2) = rmsnorm(&x_mid, &layer.ffn_norm);
            let gate = h2.dot(&layer.w_gate);
            let up = h2.dot(&layer.w_up);
            let act = &gate.mapv(silu) * &up;
            x = &x_mid + &act.dot(&layer.w_down);
            layers.push(LayerCache {
                x_in,
                rinv1,
                h1,
                v,
                rq,
                rk,
                probs,
                attn,
                x_mid,
                rinv2,
                h2,
                gate,
                up,
                act,
            });
        }
        let (h_final, rinv_f) = rmsnorm(&x, &p.final_norm);
        let logits = h_final.dot(&p.w_out);
        Ok((
            logits,
            Cache {
                layers,
                x_final: x,
                rinv_f,
                h_final,
                table,
                positions,
                xpos,
            },
        ))
    }

    /// Loss and its gradient for one sequence at explicit positions.
    ///
    /// `targets[j]` is the token expected after `tokens[j]`, or `None` when
    /// position `j` is not scored. The loss is the mean over scored
    /// positions.
    pub fn backward_at(
        &self,
        tokens: &[u32],
        targets: &[Option<u32>],
        schedule: &PositionSchedule,
        encoding: &EncodingConfig,
    ) -> Result<(f64, ModelParams)> {
        let mut grads = ModelParams::zeros(&self.config);
        let (sum, count) =
            self.accumulate_gradients(tokens, targets, schedule, encoding, &mut grads)?;
        if count == 0 {
            return Err(Error::Input("no targets to score".into()));
        }
        grads.scale(1.0 / count as f64);
        Ok((sum / count as f64, grads))
    }

    /// Loss and gradient at the encoding's inference-time positions.
    pub fn backward(
        &self,
        tokens: &[u32],
        targets: &[Option<u32>],
        encoding: &EncodingConfig,
    ) -> Result<(f64, ModelParams)> {
        let schedule = encoding.eval_schedule(tokens.len())?;
        self.backward_at(tokens, targets, &schedule, encoding)
    }

    /// Adds the gradient of the *summed* NLL to `grads` and returns
    /// `(summed NLL, number of scored positions)`.
    pub(crate) fn accumulate_gradients(
        &self,
        tokens: &[u32],
        targets: &[Option<u32>],
        schedule: &PositionSchedule,
        encoding: &EncodingConfig,
        grads: &mut ModelParams,
    ) -> Result<(f64, usize)> {
        if encoding.precision == Precision::Narrow && encoding.xpos()?.is_some() {
            return Err(Error::Config(
                "narrow precision is inference-only; training runs in wide precision".into(),
            ));
        }
        let (logits, cache) = self.forward_cached(tokens, schedule, encoding)?;
        let (sum, count) = nll_sum(&logits, targets)?;
        let p = &self.params;
        let hd = self.config.head_dim;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();

        let mut dlogits = Array2::zeros(logits.raw_dim());
        let logp = log_softmax(&logits);
        for (j, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                for c in 0..logits.ncols() {
                    dlogits[[j, c]] = logp[[j, c]].exp();
                }
                dlogits[[j, t as usize]] -= 1.0;
            }
        }

        grads.w_out += &cache.h_final.t().dot(&dlogits);
        let dh_final = dlogits.dot(&p.w_out.t());
        let mut dx = rmsnorm_back(
            &dh_final,
            &cache.x_final,
            &cache.rinv_f,
            &p.final_norm,
            &mut grads.final_norm,
        );

        for (l, lc) in cache.layers.iter().enumerate().rev() {
            let layer = &p.layers[l];
            let g = &mut grads.layers[l];

            // Feed-forward: x = x_mid + act · W_down, act = silu(gate) ⊙ up.
            g.w_down += &lc.act.t().dot(&dx);
            let dact = dx.dot(&layer.w_down.t());
            let dup = &dact * &lc.gate.mapv(silu);
            let dgate = &dact * &lc.up * &lc.gate.mapv(silu_grad);
            g.w_gate += &lc.h2.t().dot(&dgate);
            g.w_up += &lc.h2.t().dot(&dup);
            let dh2 = dgate.dot(&layer.w_gate.t()) + dup.dot(&layer.w_up.t());
            let dx_mid = &dx + &rmsnorm_back(&dh2, &lc.x_mid, &lc.rinv2, &layer.ffn_norm, &mut g.ffn_norm);

            // Attention: x_mid = x_in + attn · W_o.
            g.wo += &lc.attn.t().dot(&dx_mid);
            let dattn = dx_mid.dot(&layer.wo.t());
            let n = dattn.nrows();
            let d = dattn.ncols();
            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for (h, prob) in lc.probs.iter().enumerate() {
                let cols = s![.., h * hd..(h + 1) * hd];
                let dout = dattn.slice(cols);
                dv.slice_mut(cols).assign(&prob.t().dot(&dout));
                let dprob = dout.dot(&lc.v.slice(cols).t());
                let mut dscore = prob * &dprob;
                for (mut row, prow) in dscore.rows_mut().into_iter().zip(prob.rows()) {
                    let dot: f64 = row.sum();
                    for (ds, &pv) in row.iter_mut().zip(prow) {
                        *ds -= pv * dot;
                    }
                }
                let rq = lc.rq.slice(cols);
                let rk = lc.rk.slice(cols);
                let (drq, drk) = match &cache.xpos {
                    None => (
                        dscore.dot(&rk) * inv_sqrt,
                        dscore.t().dot(&rq) * inv_sqrt,
                    ),
                    Some(x) => xpos_score_back(&dscore, rq, rk, &cache.positions, x, inv_sqrt),
                };
                dq.slice_mut(cols).assign(&cache.table.rotate_back(drq.view())?);
                dk.slice_mut(cols).assign(&cache.table.rotate_back(drk.view())?);
            }
            g.wq += &lc.h1.t().dot(&dq);
            g.wk += &lc.h1.t().dot(&dk);
            g.wv += &lc.h1.t().dot(&dv);
            let dh1 = dq.dot(&layer.wq.t()) + dk.dot(&layer.wk.t()) + dv.dot(&layer.wv.t());
            dx = &dx_mid + &rmsnorm_back(&dh1, &lc.x_in, &lc.rinv1, &layer.attn_norm, &mut g.attn_norm);
        }

        for (j, &t) in tokens.iter().enumerate() {
            let mut row = grads.embed.row_mut(t as usize);
            row += &dx.row(j);
        }
        Ok((sum, count))
    }

    /// Greedy decoding. `encoding` replaces only the inference-time fields
    /// of the model's own encoding; weights are untouched.
    pub fn generate(
        &self,
        prompt: &[u32],
        max_new: usize,
        encoding: &EncodingConfig,
    ) -> Result<Vec<u32>> {
        self.check_tokens(prompt)?;
        let enc = self.config.encoding.with_eval_from(encoding);
        let mut tokens = prompt.to_vec();
        for _ in 0..max_new {
            let logits = self.forward(&tokens, &enc)?;
            tokens.push(argmax(logits.row(logits.nrows() - 1).iter().copied()) as u32);
        }
        Ok(tokens)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn xpos_score_back(
    dscore: &Array2<f64>,
    rq: ArrayView2<f64>,
    rk: ArrayView2<f64>,
    positions: &[f64],
    xpos: &XPosParams,
    inv_sqrt: f64,
) -> (Array2<f64>, Array2<f64>) {
    let (n, hd) = rq.dim();
    let mut drq = Array2::zeros((n, hd));
    let mut drk = Array2::zeros((n, hd));
    for m in 0..n {
        for j in 0..=m {
            let ds = dscore[[m, j]] * inv_sqrt;
            if ds == 0.0 {
                continue;
            }
            let offset = positions[m] - positions[j];
            for i in 0..hd / 2 {
                let w = ds * xpos.relative_factor(i, offset);
                for c in [2 * i, 2 * i + 1] {
                    drq[[m, c]] += w * rk[[j, c]];
                    drk[[j, c]] += w * rq[[m, c]];
                }
            }
        }
    }
    (drq, drk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ropelab_core::Scheme;

    fn small(scheme: Scheme) -> ToyModel {
        ToyModel::new(ModelConfig {
            vocab: 12,
            d_model: 8,
            n_heads: 2,
            head_dim: 4,
            n_layers: 2,
            ff_mult: 2,
            train_ctx: 8,
            encoding: EncodingConfig::new(scheme, 4),
            seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn shapes() {
        let m = small(Scheme::Rope);
        let enc = m.config.encoding.clone();
        assert_eq!(m.forward(&[3], &enc).unwrap().dim(), (1, 12));
        assert_eq!(m.forward(&[3, 4, 5], &enc).unwrap().dim(), (3, 12));
    }

    #[test]
    fn out_of_vocab_is_input_error() {
        let m = small(Scheme::Rope);
        let enc = m.config.encoding.clone();
        assert!(matches!(m.forward(&[12], &enc), Err(Error::Input(_))));
        assert!(matches!(m.forward(&[], &enc), Err(Error::Input(_))));
    }

    #[test]
    fn zero_output_projection_gives_uniform_prediction() {
        let mut m = small(Scheme::Rope);
        m.params.w_out.fill(0.0);
        let enc = m.config.encoding.clone();
        let logits = m.forward(&[1, 2, 3], &enc).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        let l = loss(&logits, &[Some(0), Some(5), None]).unwrap();
        assert!((l - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let uniform = Array2::zeros((3, 256));
        let l = loss(&uniform, &[Some(1), Some(2), Some(255)]).unwrap();
        assert!((l - 256f64.ln()).abs() < 1e-12);
        let mut peaked = Array2::zeros((1, 8));
        peaked[[0, 3]] = 1e3;
        assert!(loss(&peaked, &[Some(3)]).unwrap() < 1e-300);
        assert!(loss(&peaked, &[None]).is_err());
        assert!(loss(&peaked, &[Some(9)]).is_err());
    }

    #[test]
    fn generate_zero_new_tokens() {
        let m = small(Scheme::Rope);
        let enc = m.config.encoding.clone();
        assert_eq!(m.generate(&[1, 2], 0, &enc).unwrap(), vec![1, 2]);
        let a = m.generate(&[1, 2], 4, &enc).unwrap();
        assert_eq!(a, m.generate(&[1, 2], 4, &enc).unwrap());
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn narrow_training_rejected() {
        let m = small(Scheme::XPos);
        let mut enc = m.config.encoding.clone();
        enc.precision = Precision::Narrow;
        assert!(m.backward(&[1, 2], &[Some(1), Some(2)], &enc).is_err());
    }
}
