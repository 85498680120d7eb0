//! Document question answering prompts with controlled answer placement.

use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mutate::mutate_numeric_answer;
use crate::sample::{AnswerLocation, QuestionLocation, TaskKind, TaskSample, SAMPLE_SCHEMA};
use crate::{Error, Result, TokenBudgeter};

/// A source document with a short answer that appears in it verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub document: String,
    pub question: String,
    pub answer: String,
}

impl QARecord {
    pub fn validate(&self) -> Result<()> {
        if self.answer.trim().is_empty() {
            return Err(Error::Consistency("empty answer".into()));
        }
        if !self.document.contains(&self.answer) {
            return Err(Error::Consistency(format!(
                "answer `{}` does not occur in the document",
                self.answer
            )));
        }
        Ok(())
    }

    pub fn is_numeric(&self) -> bool {
        !self.answer.is_empty() && self.answer.bytes().all(|b| b.is_ascii_digit())
    }
}

/// Reads JSON Lines records, validating each. Blank lines are skipped.
pub fn read_records<R: BufRead>(input: R, path: &str) -> Result<Vec<QARecord>> {
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
        let rec: QARecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        rec.validate().map_err(|e| err(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// The small corpus shipped with the crate.
pub fn sample_corpus() -> Vec<QARecord> {
    read_records(include_str!("../data/sample_qa.jsonl").as_bytes(), "sample_qa.jsonl")
        .expect("bundled corpus is valid")
}

/// Where the answer and question go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub answer: AnswerLocation,
    pub question: QuestionLocation,
}

/// Attempts at a placement before giving up.
pub const PLACEMENT_RETRIES: usize = 32;

const INSTRUCTION: &str = "Answer the question using only the document. \
Reply with the answer alone.";

fn assemble(document: &str, question: &str, location: QuestionLocation) -> String {
    match location {
        QuestionLocation::Start => {
            format!("{INSTRUCTION}\nQuestion: {question}\n\nDocument:\n{document}\n\nAnswer:")
        }
        _ => format!("{INSTRUCTION}\n\nDocument:\n{document}\n\nQuestion: {question}\nAnswer:"),
    }
}

/// Relative offset of the first occurrence of `needle` in `haystack`,
/// measured in characters.
pub fn first_occurrence_fraction(haystack: &str, needle: &str) -> Option<f64> {
    let byte = haystack.find(needle)?;
    let before = haystack[..byte].chars().count();
    Some(before as f64 / haystack.chars().count() as f64)
}

fn band(location: AnswerLocation) -> Result<(f64, f64)> {
    match location {
        AnswerLocation::Start => Ok((0.0, 0.1)),
        AnswerLocation::Middle => Ok((0.1, 0.9)),
        AnswerLocation::End => Ok((0.9, 1.0)),
        AnswerLocation::NotApplicable => {
            Err(Error::Input("QA samples need a concrete answer location".into()))
        }
    }
}

/// Builds the character stream `filler · document · filler` so a window of
/// `chars` characters can be cut around any occurrence. Filler segments are
/// other documents (cycled), skipping any that contain `banned`.
fn stream(document: &str, neighbors: &[String], banned: &[&str], chars: usize) -> (String, usize) {
    let usable: Vec<&str> = neighbors
        .iter()
        .map(String::as_str)
        .filter(|n| !n.trim().is_empty() && banned.iter().all(|b| !n.contains(b)))
        .collect();
    let mut before = String::new();
    let mut after = String::new();
    if !usable.is_empty() {
        let mut i = 0;
        while before.chars().count() < chars {
            before = format!("{} {}", usable[i % usable.len()], before);
            i += 1;
        }
        let mut j = 0;
        while after.chars().count() < chars {
            after.push(' ');
            after.push_str(usable[(i + j) % usable.len()]);
            j += 1;
        }
    }
    let offset = before.len();
    (format!("{before}{document}{after}"), offset)
}

fn char_to_byte(s: &str, c: usize) -> usize {
    s.char_indices().nth(c).map_or(s.len(), |(b, _)| b)
}

/// Cuts a window of about `chars` characters from `stream` so that the
/// occurrence of `len` bytes at byte `at` lands near relative offset `frac`.
/// Partial words at the edges are dropped.
fn cut(stream: &str, at: usize, len: usize, frac: f64, chars: usize) -> String {
    let at_char = stream[..at].chars().count();
    let total = stream.chars().count();
    let lead = (frac * chars as f64).round() as usize;
    let start = at_char.saturating_sub(lead);
    let end = (start + chars).min(total);
    let (mut sb, mut eb) = (char_to_byte(stream, start), char_to_byte(stream, end));
    let is_space = |b: usize| stream[b..].starts_with(char::is_whitespace);
    if sb > 0 && !is_space(sb - 1) && !is_space(sb) {
        if let Some(sp) = stream[sb..at].find(char::is_whitespace) {
            sb += sp;
        }
    }
    if eb < stream.len() && !is_space(eb) {
        if let Some(sp) = stream[at + len..eb].rfind(char::is_whitespace) {
            eb = at + len + sp;
        }
    }
    stream[sb..eb].trim().to_string()
}

/// Accepted deviation of the measured prompt size from the target.
pub const BUDGET_TOLERANCE: f64 = 0.15;

#[allow(clippy::too_many_arguments)]
fn build<R: Rng + ?Sized>(
    task: TaskKind,
    record: &QARecord,
    placement: Placement,
    target_tokens: usize,
    budgeter: &TokenBudgeter,
    neighbors: &[String],
    seed: u64,
    rng: &mut R,
) -> Result<TaskSample> {
    record.validate()?;
    if target_tokens == 0 {
        return Err(Error::Input("target_tokens must be positive".into()));
    }
    let (lo, hi) = band(placement.answer)?;
    if placement.question == QuestionLocation::NotApplicable {
        return Err(Error::Input("QA samples need a concrete question location".into()));
    }
    let overhead = budgeter.count(&assemble("", &record.question, placement.question))?;
    let ratio = budgeter.sizing_ratio();
    let doc_chars = ((target_tokens.saturating_sub(overhead)) as f64 * ratio).floor() as usize;

    for _ in 0..PLACEMENT_RETRIES {
        let (document, answer, banned) = if task == TaskKind::Altqa {
            let new = mutate_numeric_answer(&record.answer, rng)?;
            (
                record.document.replace(&record.answer, &new),
                new,
                vec![record.answer.as_str()],
            )
        } else {
            (record.document.clone(), record.answer.clone(), vec![])
        };
        let answer_chars = answer.chars().count();
        let room = (hi - lo) * doc_chars as f64;
        if doc_chars == 0 || room < answer_chars as f64 + 2.0 {
            return Err(Error::Placement(format!(
                "a budget of {target_tokens} tokens leaves {doc_chars} document characters, \
                 too few to place the answer in the {} band",
                placement.answer
            )));
        }
        let mut banned_all = banned.clone();
        banned_all.push(answer.as_str());
        let (stream, offset) = stream(&document, neighbors, &banned_all, doc_chars);
        // Any occurrence in the document may serve as the first one, as long
        // as earlier ones fall outside the window.
        let occurrences: Vec<usize> = document
            .match_indices(answer.as_str())
            .map(|(b, _)| offset + b)
            .collect();
        let at = occurrences[rng.random_range(0..occurrences.len())];
        let hi_frac = if placement.answer == AnswerLocation::End {
            1.0 - (answer_chars as f64 + 1.0) / doc_chars as f64
        } else {
            hi
        };
        if hi_frac <= lo {
            continue;
        }
        let frac = rng.random_range(lo..hi_frac);
        let doc = cut(&stream, at, answer.len(), frac, doc_chars);
        let Some(measured) = first_occurrence_fraction(&doc, &answer) else {
            continue;
        };
        if measured < lo || measured >= hi {
            continue;
        }
        if banned.iter().any(|b| doc.contains(b)) {
            continue;
        }
        let prompt = assemble(&doc, &record.question, placement.question);
        if banned.iter().any(|b| prompt.contains(b)) {
            continue;
        }
        let measured = budgeter.count(&prompt)? as f64;
        if (measured - target_tokens as f64).abs() > BUDGET_TOLERANCE * target_tokens as f64 {
            return Err(Error::Placement(format!(
                "prompt measures {measured} tokens against a target of {target_tokens}; \
                 not enough document or padding text"
            )));
        }
        return Ok(TaskSample {
            schema: SAMPLE_SCHEMA.into(),
            id: format!("{task}-{seed}"),
            task,
            prompt,
            answer,
            target_tokens,
            answer_location: placement.answer,
            question_location: placement.question,
            num_lines: None,
            seed,
        });
    }
    Err(Error::Placement(format!(
        "could not place the answer in the {} band after {PLACEMENT_RETRIES} attempts",
        placement.answer
    )))
}

/// Numeric-answer variant: the answer and all its occurrences are replaced
/// by a mutated value, and the original never appears in the prompt.
/// `neighbors` supplies padding text.
#[allow(clippy::too_many_arguments)]
pub fn build_altqa_sample<R: Rng + ?Sized>(
    record: &QARecord,
    placement: Placement,
    target_tokens: usize,
    budgeter: &TokenBudgeter,
    neighbors: &[String],
    seed: u64,
    rng: &mut R,
) -> Result<TaskSample> {
    if !record.is_numeric() {
        return Err(Error::Input(format!(
            "altqa needs a numeric answer, got `{}`",
            record.answer
        )));
    }
    build(TaskKind::Altqa, record, placement, target_tokens, budgeter, neighbors, seed, rng)
}

/// Same as [`build_altqa_sample`] without the answer mutation.
#[allow(clippy::too_many_arguments)]
pub fn build_ffqa_sample<R: Rng + ?Sized>(
    record: &QARecord,
    placement: Placement,
    target_tokens: usize,
    budgeter: &TokenBudgeter,
    neighbors: &[String],
    seed: u64,
    rng: &mut R,
) -> Result<TaskSample> {
    build(TaskKind::Ffqa, record, placement, target_tokens, budgeter, neighbors, seed, rng)
}
