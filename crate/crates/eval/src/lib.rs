//! Scoring of model outputs against generated samples, stratified
//! accuracy tables, and windowed perplexity.

mod error;
pub mod perplexity;
pub mod report;
pub mod score;

pub use error::{Error, Result};
pub use perplexity::{perplexity, LogProbProvider, PerplexityResult};
pub use report::{aggregate, render_tables, EvalReport, TableFormat, DEFAULT_BUCKETS};
pub use score::{score_sample, OutputRecord};
