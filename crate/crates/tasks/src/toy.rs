//! Symbolic key-value retrieval sequences for the toy transformer.
//!
//! Layout: `BOS k₁ v₁ k₂ v₂ … kₙ vₙ QUERY k_q`, with `v_q` as the expected
//! continuation. Keys are distinct within a sequence; values may repeat.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sample::{AnswerLocation, QuestionLocation, TaskKind, TaskSample, SAMPLE_SCHEMA};
use crate::{Error, Result};

pub const BOS: u32 = 0;
pub const QUERY: u32 = 1;

/// Token layout: two specials, then `n_keys` key tokens, then `n_values`
/// value tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyVocab {
    pub n_keys: u32,
    pub n_values: u32,
}

impl Default for ToyVocab {
    fn default() -> Self {
        ToyVocab {
            n_keys: 128,
            n_values: 16,
        }
    }
}

impl ToyVocab {
    pub fn size(&self) -> usize {
        2 + self.n_keys as usize + self.n_values as usize
    }

    pub fn key(&self, i: u32) -> u32 {
        2 + i
    }

    pub fn value(&self, i: u32) -> u32 {
        2 + self.n_keys + i
    }

    pub fn is_key(&self, t: u32) -> bool {
        (2..2 + self.n_keys).contains(&t)
    }

    pub fn is_value(&self, t: u32) -> bool {
        (2 + self.n_keys..self.size() as u32).contains(&t)
    }

    /// Largest pair count whose prompt fits in `ctx` tokens.
    pub fn pairs_for_context(ctx: usize) -> usize {
        ctx.saturating_sub(3) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyRetrieval {
    pub tokens: Vec<u32>,
    pub answer: u32,
    /// Index of the queried pair's value token inside `tokens`.
    pub answer_index: usize,
}

impl ToyRetrieval {
    /// Per-position next-token targets with only the final position scored.
    pub fn targets(&self) -> Vec<Option<u32>> {
        let mut t = vec![None; self.tokens.len()];
        *t.last_mut().expect("nonempty") = Some(self.answer);
        t
    }
}

pub fn gen_toy_retrieval<R: Rng + ?Sized>(
    num_pairs: usize,
    vocab: &ToyVocab,
    rng: &mut R,
) -> Result<ToyRetrieval> {
    if num_pairs == 0 {
        return Err(Error::Input("num_pairs must be at least 1".into()));
    }
    if vocab.n_values == 0 {
        return Err(Error::Input("need at least one value token".into()));
    }
    if num_pairs > vocab.n_keys as usize {
        return Err(Error::Capacity {
            requested: num_pairs,
            available: vocab.n_keys as usize,
        });
    }
    let keys = sample(rng, vocab.n_keys as usize, num_pairs);
    let mut tokens = Vec::with_capacity(2 * num_pairs + 3);
    tokens.push(BOS);
    let mut values = Vec::with_capacity(num_pairs);
    for k in keys.iter() {
        let v = vocab.value(rng.random_range(0..vocab.n_values));
        tokens.push(vocab.key(k as u32));
        tokens.push(v);
        values.push(v);
    }
    let q = rng.random_range(0..num_pairs);
    tokens.push(QUERY);
    tokens.push(tokens[1 + 2 * q]);
    Ok(ToyRetrieval {
        tokens,
        answer: values[q],
        answer_index: 2 + 2 * q,
    })
}

/// Training sequence with several queries: `BOS k₁ v₁ … kₙ vₙ` followed by
/// `QUERY k v` triples over distinct pairs in random order, as many as fit
/// in `len` tokens. Targets sit at the queried key positions; the final
/// triple's value token is dropped since nothing follows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyRecall {
    pub tokens: Vec<u32>,
    pub targets: Vec<Option<u32>>,
}

/// `n = max(len / 5, min_pairs)` pairs, capped by the key count.
pub fn gen_toy_recall<R: Rng + ?Sized>(
    len: usize,
    min_pairs: usize,
    vocab: &ToyVocab,
    rng: &mut R,
) -> Result<ToyRecall> {
    let n = (len / 5).max(min_pairs).max(1);
    if 2 * n + 3 > len {
        return Err(Error::Input(format!(
            "{n} pairs and one query need {} tokens, length is {len}",
            2 * n + 3
        )));
    }
    let pairs = gen_toy_retrieval(n, vocab, rng)?;
    let body = &pairs.tokens[..2 * n + 1];
    let mut tokens = body.to_vec();
    let mut targets = vec![None; tokens.len()];
    let order = sample(rng, n, n);
    for q in order.iter() {
        if tokens.len() + 2 > len {
            break;
        }
        let (k, v) = (body[1 + 2 * q], body[2 + 2 * q]);
        tokens.extend([QUERY, k, v]);
        targets.extend([None, Some(v), None]);
    }
    tokens.pop();
    targets.pop();
    Ok(ToyRecall { tokens, targets })
}

/// Sample wrapper: the prompt holds the token ids separated by spaces and
/// the answer is the value token id.
pub fn toy_sample(retrieval: &ToyRetrieval, seed: u64) -> TaskSample {
    let prompt = retrieval
        .tokens
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    TaskSample {
        schema: SAMPLE_SCHEMA.into(),
        id: format!("toy-retrieval-{seed}"),
        task: TaskKind::ToyRetrieval,
        prompt,
        answer: retrieval.answer.to_string(),
        target_tokens: retrieval.tokens.len(),
        answer_location: AnswerLocation::NotApplicable,
        question_location: QuestionLocation::NotApplicable,
        num_lines: None,
        seed,
    }
}

/// Token ids of a toy-retrieval prompt.
pub fn parse_toy_prompt(prompt: &str) -> Result<Vec<u32>> {
    prompt
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Input(format!("`{t}` is not a token id")))
        })
        .collect()
}
