//! Register-lookup prompts: many `line <key>: REGISTER_CONTENT is <value>`
//! records followed by a question about one key.

use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sample::{AnswerLocation, QuestionLocation, TaskKind, TaskSample, SAMPLE_SCHEMA};
use crate::{Error, Result, TokenBudgeter};

pub const VALUE_MIN: u32 = 1000;
pub const VALUE_MAX: u32 = 99999;

const HEADER: &str = "Each line below stores a value under a two-word name. \
Read every line carefully; you will be asked for one of the values afterwards.\n\n";

fn parse_list(text: &'static str) -> Vec<&'static str> {
    text.lines().map(str::trim).filter(|w| !w.is_empty()).collect()
}

pub fn adjectives() -> &'static [&'static str] {
    static WORDS: OnceLock<Vec<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| parse_list(include_str!("../data/adjectives.txt")))
}

pub fn nouns() -> &'static [&'static str] {
    static WORDS: OnceLock<Vec<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| parse_list(include_str!("../data/nouns.txt")))
}

/// Number of distinct adjective-noun keys.
pub fn key_capacity() -> usize {
    adjectives().len() * nouns().len()
}

pub fn format_line(key: &str, value: u32) -> String {
    format!("line {key}: REGISTER_CONTENT is <{value}>")
}

pub fn format_query(key: &str) -> String {
    format!("\nWhat is the REGISTER_CONTENT in line {key}? Reply with the number only.\n")
}

/// Draws `n` distinct keys and their values.
fn draw_lines<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<(String, u32)>> {
    let cap = key_capacity();
    if n > cap {
        return Err(Error::Capacity {
            requested: n,
            available: cap,
        });
    }
    let adj = adjectives();
    let noun = nouns();
    let picks = sample(rng, cap, n);
    Ok(picks
        .iter()
        .map(|idx| {
            let key = format!("{}-{}", adj[idx / noun.len()], noun[idx % noun.len()]);
            (key, rng.random_range(VALUE_MIN..=VALUE_MAX))
        })
        .collect())
}

fn assemble(lines: &[(String, u32)], query: usize) -> String {
    let mut prompt = String::from(HEADER);
    for (k, v) in lines {
        prompt.push_str(&format_line(k, *v));
        prompt.push('\n');
    }
    prompt.push_str(&format_query(&lines[query].0));
    prompt
}

/// Generates one sample with `num_lines` records. `target_tokens` is stored
/// as given (use [`lines_for_budget`] to derive `num_lines` from it).
pub fn gen_longchat_lines<R: Rng + ?Sized>(
    num_lines: usize,
    target_tokens: usize,
    seed: u64,
    rng: &mut R,
) -> Result<TaskSample> {
    if num_lines == 0 {
        return Err(Error::Input("num_lines must be at least 1".into()));
    }
    let lines = draw_lines(num_lines, rng)?;
    let query = rng.random_range(0..num_lines);
    Ok(TaskSample {
        schema: SAMPLE_SCHEMA.into(),
        id: format!("longchat-lines-{seed}"),
        task: TaskKind::LongchatLines,
        prompt: assemble(&lines, query),
        answer: lines[query].1.to_string(),
        target_tokens: target_tokens.max(1),
        answer_location: AnswerLocation::for_fraction(query as f64 / num_lines as f64),
        question_location: QuestionLocation::End,
        num_lines: Some(num_lines),
        seed,
    })
}

/// Seeds of the calibration streams used by [`lines_for_budget`].
const CALIBRATION_SEEDS: [u64; 3] = [0x11, 0x22, 0x33];

/// Smallest line count whose prompt measures at least `target_tokens`.
///
/// The measure is the mean over fixed calibration streams of the prompt
/// built from the first `n` lines of each stream. Prefix prompts grow
/// monotonically with `n`, so a bisection finds the smallest count.
pub fn lines_for_budget(target_tokens: usize, budgeter: &TokenBudgeter) -> Result<usize> {
    let cap = key_capacity();
    let mut streams: Vec<Vec<(String, u32)>> = Vec::new();
    let measure = |n: usize, streams: &mut Vec<Vec<(String, u32)>>| -> Result<f64> {
        if streams.first().is_none_or(|s| s.len() < n) {
            let len = n.next_power_of_two().min(cap);
            *streams = CALIBRATION_SEEDS
                .iter()
                .map(|&s| draw_lines(len, &mut ChaCha8Rng::seed_from_u64(s)))
                .collect::<Result<_>>()?;
        }
        let mut total = 0.0;
        for s in streams.iter() {
            total += budgeter.count(&assemble(&s[..n], 0))? as f64;
        }
        Ok(total / streams.len() as f64)
    };
    let target = target_tokens as f64;
    if measure(1, &mut streams)? >= target {
        return Ok(1);
    }
    let mut hi = 2;
    while measure(hi, &mut streams)? < target {
        if hi == cap {
            return Err(Error::Capacity {
                requested: cap + 1,
                available: cap,
            });
        }
        hi = (hi * 2).min(cap);
    }
    let mut lo = hi / 2;
    // measure(lo) < target <= measure(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if measure(mid, &mut streams)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Recovers `(key, value)` records and the queried key from a prompt.
pub fn parse_lines_prompt(prompt: &str) -> Option<(Vec<(String, u32)>, String)> {
    let mut records = Vec::new();
    let mut query = None;
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix("line ") {
            let (key, tail) = rest.split_once(": REGISTER_CONTENT is <")?;
            let value = tail.strip_suffix('>')?.parse().ok()?;
            records.push((key.to_string(), value));
        } else if let Some(rest) = line.strip_prefix("What is the REGISTER_CONTENT in line ") {
            query = Some(rest.split_once('?')?.0.to_string());
        }
    }
    Some((records, query?))
}
