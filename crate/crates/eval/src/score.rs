use std::io::{BufRead, Write};

use ropelab_tasks::TaskSample;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A model's raw answer to one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub output: String,
}

pub fn write_outputs<W: Write>(mut out: W, records: &[OutputRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}

pub fn read_outputs<R: BufRead>(input: R, path: &str) -> Result<Vec<OutputRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        let r: OutputRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if r.id.is_empty() {
            return Err(err("empty id".into()));
        }
        out.push(r);
    }
    Ok(out)
}

fn is_wrapper(c: char) -> bool {
    c.is_ascii_punctuation() || c.is_whitespace()
}

/// Trims, case-folds, collapses whitespace runs and strips surrounding
/// punctuation (including angle brackets).
pub fn normalize(text: &str) -> String {
    let folded = text.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(is_wrapper).to_string()
}

fn is_integer(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn same_integer(a: &str, b: &str) -> bool {
    let a = a.trim_start_matches('0');
    let b = b.trim_start_matches('0');
    a == b
}

/// Numeric answers match a maximal run of digits in the output that
/// denotes the same integer, so `1976` does not match inside `19761`.
/// Other answers match as a substring after normalization.
pub fn answer_matches(answer: &str, output: &str) -> bool {
    let gold = normalize(answer);
    let text = normalize(output);
    if gold.is_empty() {
        return false;
    }
    if is_integer(&gold) {
        text.split(|c: char| !c.is_ascii_digit())
            .filter(|run| !run.is_empty())
            .any(|run| same_integer(run, &gold))
    } else {
        text.contains(&gold)
    }
}

pub fn score_sample(sample: &TaskSample, out: &OutputRecord) -> Result<bool> {
    if sample.id != out.id {
        return Err(Error::Pairing(format!(
            "output `{}` scored against sample `{}`",
            out.id, sample.id
        )));
    }
    Ok(answer_matches(&sample.answer, &out.output))
}
