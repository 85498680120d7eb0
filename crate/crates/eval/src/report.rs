use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use ropelab_tasks::{AnswerLocation, QuestionLocation, TaskSample};
use serde::{Deserialize, Serialize};

use crate::score::{score_sample, OutputRecord};
use crate::{Error, Result};

/// Context lengths of the standard register-lookup grid.
pub const DEFAULT_BUCKETS: [usize; 12] = [
    2500, 3600, 4200, 4800, 7100, 9400, 11800, 14000, 16000, 17500, 20000, 22000,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.n += 1;
        self.correct += ok as usize;
        self.accuracy = self.correct as f64 / self.n as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub context_tokens: usize,
    pub answer_location: AnswerLocation,
    pub question_location: QuestionLocation,
    #[serde(flatten)]
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub rows: Vec<ReportRow>,
    pub overall: Tally,
}

/// Bucket for a recorded length: the nearest listed length, ties going to
/// the shorter one. An empty list buckets every sample by its own length.
pub fn bucket_for(target_tokens: usize, buckets: &[usize]) -> usize {
    buckets
        .iter()
        .copied()
        .min_by_key(|&b| (b.abs_diff(target_tokens), b))
        .unwrap_or(target_tokens)
}

/// Pairs outputs with samples by id and tallies exact-match accuracy per
/// (bucket, answer location, question location). Samples without an
/// output count as wrong; outputs without a sample, or duplicated ids, are
/// pairing errors.
pub fn aggregate(
    samples: &[TaskSample],
    outputs: &[OutputRecord],
    buckets: &[usize],
) -> Result<EvalReport> {
    let mut by_id: HashMap<&str, &OutputRecord> = HashMap::with_capacity(outputs.len());
    for o in outputs {
        if by_id.insert(o.id.as_str(), o).is_some() {
            return Err(Error::Pairing(format!("duplicate output id `{}`", o.id)));
        }
    }
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(samples.len());
    for s in samples {
        if seen.insert(s.id.as_str(), ()).is_some() {
            return Err(Error::Pairing(format!("duplicate sample id `{}`", s.id)));
        }
    }
    if let Some(orphan) = outputs.iter().find(|o| !seen.contains_key(o.id.as_str())) {
        return Err(Error::Pairing(format!("output `{}` has no sample", orphan.id)));
    }

    let mut cells: BTreeMap<(usize, AnswerLocation, QuestionLocation), Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    for s in samples {
        let ok = match by_id.get(s.id.as_str()) {
            Some(o) => score_sample(s, o)?,
            None => false,
        };
        let key = (bucket_for(s.target_tokens, buckets), s.answer_location, s.question_location);
        cells.entry(key).or_default().add(ok);
        overall.add(ok);
    }
    let mut tasks: Vec<&str> = samples.iter().map(|s| s.task.as_str()).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let task = match tasks.as_slice() {
        [] => "none".to_string(),
        [one] => one.to_string(),
        _ => "mixed".to_string(),
    };
    Ok(EvalReport {
        task,
        rows: cells
            .into_iter()
            .map(|((c, a, q), tally)| ReportRow {
                context_tokens: c,
                answer_location: a,
                question_location: q,
                tally,
            })
            .collect(),
        overall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Input(format!("unknown table format `{other}`"))),
        }
    }
}

const COLUMNS: [&str; 7] = [
    "task",
    "context_tokens",
    "answer_location",
    "question_location",
    "n",
    "correct",
    "accuracy",
];

/// One row per stratum, then an `all` row when the report is nonempty.
/// Accuracies are printed with four decimals.
pub fn render_tables(report: &EvalReport, format: TableFormat) -> String {
    let mut lines: Vec<[String; 7]> = report
        .rows
        .iter()
        .map(|r| {
            [
                report.task.clone(),
                r.context_tokens.to_string(),
                r.answer_location.to_string(),
                r.question_location.to_string(),
                r.tally.n.to_string(),
                r.tally.correct.to_string(),
                format!("{:.4}", r.tally.accuracy),
            ]
        })
        .collect();
    if report.overall.n > 0 {
        lines.push([
            report.task.clone(),
            "all".into(),
            "all".into(),
            "all".into(),
            report.overall.n.to_string(),
            report.overall.correct.to_string(),
            format!("{:.4}", report.overall.accuracy),
        ]);
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for l in &lines {
                out.push_str(&l.join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
            for l in &lines {
                let _ = writeln!(out, "| {} |", l.join(" | "));
            }
        }
    }
    out
}
