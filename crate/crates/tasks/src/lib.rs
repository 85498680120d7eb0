//! Seeded prompt generators for long-context evaluation.
//!
//! Every generator is a pure function of its parameters and an RNG, so a
//! dataset is reproduced byte for byte from its base seed.

mod budget;
pub mod dataset;
mod error;
pub mod lines;
pub mod mutate;
pub mod qa;
pub mod sample;
pub mod toy;

pub use budget::{text_digest, TokenBudgeter};
pub use error::{Error, Result};
pub use sample::{AnswerLocation, QuestionLocation, TaskKind, TaskSample};
