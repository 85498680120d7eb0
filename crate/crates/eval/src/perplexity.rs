//! Windowed perplexity: each window of `N` tokens conditions on its first
//! `N − eval_len` tokens and scores the last `eval_len`.

use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use ropelab_core::EncodingConfig;
use ropelab_toy::model::log_softmax;
use ropelab_toy::ToyModel;
use serde::Serialize;

use crate::{Error, Result};

pub const DEFAULT_EVAL_LEN: usize = 256;

/// Log-probabilities of observed next tokens. For `n` input tokens the
/// result has `n − 1` entries; entry `i` is `ln p(tokens[i+1] | tokens[..=i])`.
pub trait LogProbProvider {
    fn log_probs(&mut self, tokens: &[u32]) -> Result<Vec<f64>>;
}

/// Every token equally likely over a vocabulary of `vocab` symbols.
#[derive(Debug, Clone, Copy)]
pub struct UniformProvider {
    pub vocab: usize,
}

impl LogProbProvider for UniformProvider {
    fn log_probs(&mut self, tokens: &[u32]) -> Result<Vec<f64>> {
        if self.vocab == 0 {
            return Err(Error::Provider("empty vocabulary".into()));
        }
        let lp = -(self.vocab as f64).ln();
        Ok(vec![lp; tokens.len().saturating_sub(1)])
    }
}

/// In-process toy model at the positions of a given encoding.
pub struct ToyProvider<'a> {
    pub model: &'a ToyModel,
    pub encoding: EncodingConfig,
}

impl LogProbProvider for ToyProvider<'_> {
    fn log_probs(&mut self, tokens: &[u32]) -> Result<Vec<f64>> {
        let logits = self.model.forward(tokens, &self.encoding)?;
        let lp = log_softmax(&logits);
        Ok((0..tokens.len().saturating_sub(1))
            .map(|i| lp[[i, tokens[i + 1] as usize]])
            .collect())
    }
}

/// Talks to a child process over standard streams: each request is one
/// JSON line holding the token id list, each response one JSON line
/// holding the log-prob list.
pub struct SubprocessProvider {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessProvider {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Provider(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessProvider { child, stdin, stdout })
    }
}

impl LogProbProvider for SubprocessProvider {
    fn log_probs(&mut self, tokens: &[u32]) -> Result<Vec<f64>> {
        let request = serde_json::to_string(tokens).expect("token list serializes");
        writeln!(self.stdin, "{request}")?;
        self.stdin.flush()?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(Error::Provider("provider closed its output".into()));
        }
        serde_json::from_str(line.trim())
            .map_err(|e| Error::Provider(format!("bad response: {e}")))
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Token ranges of one window, relative to the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Window {
    pub prompt: Range<usize>,
    pub eval: Range<usize>,
}

/// Non-overlapping windows at offsets `0, N, 2N, …` that fit entirely in
/// a document of `len` tokens.
pub fn windows(len: usize, context: usize, eval_len: usize) -> Result<Vec<Window>> {
    if eval_len == 0 || context <= eval_len {
        return Err(Error::Input(format!(
            "context {context} must exceed the evaluation length {eval_len}"
        )));
    }
    if len < context {
        return Err(Error::Input(format!(
            "document has {len} tokens, fewer than the context {context}"
        )));
    }
    Ok((0..=len - context)
        .step_by(context)
        .map(|off| Window {
            prompt: off..off + context - eval_len,
            eval: off + context - eval_len..off + context,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerplexityResult {
    pub context: usize,
    pub eval_len: usize,
    pub windows: usize,
    pub tokens_scored: usize,
    pub mean_nll: f64,
    pub perplexity: f64,
}

/// Compensated running sum; thousands of near-equal terms otherwise drift
/// by more than the exponentiated result can absorb.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean over all windows of the negative log-probability of each window's
/// final `eval_len` tokens, exponentiated.
pub fn perplexity(
    provider: &mut dyn LogProbProvider,
    document: &[u32],
    context: usize,
    eval_len: usize,
) -> Result<PerplexityResult> {
    let plan = windows(document.len(), context, eval_len)?;
    let mut total = Neumaier::default();
    let mut count = 0usize;
    for w in &plan {
        let tokens = &document[w.prompt.start..w.eval.end];
        let lp = provider.log_probs(tokens)?;
        if lp.len() != tokens.len() - 1 {
            return Err(Error::Provider(format!(
                "expected {} log-probs, got {}",
                tokens.len() - 1,
                lp.len()
            )));
        }
        // Entry i predicts token i + 1, so the evaluated tokens
        // N − eval_len .. N are entries N − eval_len − 1 .. N − 1.
        for &v in &lp[context - eval_len - 1..] {
            if !v.is_finite() || v > 0.0 {
                return Err(Error::Provider(format!("invalid log-probability {v}")));
            }
            total.add(-v);
            count += 1;
        }
    }
    let mean_nll = total.sum() / count as f64;
    Ok(PerplexityResult {
        context,
        eval_len,
        windows: plan.len(),
        tokens_scored: count,
        mean_nll,
        perplexity: mean_nll.exp(),
    })
}
