use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Schema tag written into every serialized sample.
pub const SAMPLE_SCHEMA: &str = "ropelab.task-sample/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    LongchatLines,
    Altqa,
    Ffqa,
    ToyRetrieval,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::LongchatLines => "longchat-lines",
            TaskKind::Altqa => "altqa",
            TaskKind::Ffqa => "ffqa",
            TaskKind::ToyRetrieval => "toy-retrieval",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "longchat-lines" => Ok(TaskKind::LongchatLines),
            "altqa" => Ok(TaskKind::Altqa),
            "ffqa" => Ok(TaskKind::Ffqa),
            "toy-retrieval" => Ok(TaskKind::ToyRetrieval),
            other => Err(Error::Input(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerLocation {
    Start,
    Middle,
    End,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl AnswerLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerLocation::Start => "start",
            AnswerLocation::Middle => "middle",
            AnswerLocation::End => "end",
            AnswerLocation::NotApplicable => "n/a",
        }
    }

    /// Band for a relative offset in `[0, 1)`: first tenth, last tenth, or
    /// anything between.
    pub fn for_fraction(f: f64) -> Self {
        if f < 0.1 {
            AnswerLocation::Start
        } else if f >= 0.9 {
            AnswerLocation::End
        } else {
            AnswerLocation::Middle
        }
    }
}

impl fmt::Display for AnswerLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(AnswerLocation::Start),
            "middle" => Ok(AnswerLocation::Middle),
            "end" => Ok(AnswerLocation::End),
            "n/a" => Ok(AnswerLocation::NotApplicable),
            other => Err(Error::Input(format!("unknown answer location `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionLocation {
    Start,
    End,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl QuestionLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionLocation::Start => "start",
            QuestionLocation::End => "end",
            QuestionLocation::NotApplicable => "n/a",
        }
    }
}

impl fmt::Display for QuestionLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(QuestionLocation::Start),
            "end" => Ok(QuestionLocation::End),
            "n/a" => Ok(QuestionLocation::NotApplicable),
            other => Err(Error::Input(format!("unknown question location `{other}`"))),
        }
    }
}

/// One generated prompt with its reference answer. Field order is the
/// serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub schema: String,
    pub id: String,
    pub task: TaskKind,
    pub prompt: String,
    pub answer: String,
    pub target_tokens: usize,
    pub answer_location: AnswerLocation,
    pub question_location: QuestionLocation,
    pub num_lines: Option<usize>,
    pub seed: u64,
}

impl TaskSample {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }
}

pub fn write_jsonl<W: Write>(mut out: W, samples: &[TaskSample]) -> Result<()> {
    for s in samples {
        writeln!(out, "{}", s.to_json_line())?;
    }
    Ok(())
}

/// Reads samples, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<R: BufRead>(input: R, path: &str) -> Result<Vec<TaskSample>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TaskSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if s.schema != SAMPLE_SCHEMA {
            return Err(Error::Parse {
                path: path.to_string(),
                line: i + 1,
                message: format!("unsupported schema `{}`", s.schema),
            });
        }
        out.push(s);
    }
    Ok(out)
}
