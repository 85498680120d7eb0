use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ropelab_tasks::dataset::{generate, GenSpec};
use ropelab_tasks::qa::{read_records, sample_corpus};
use ropelab_tasks::sample::write_jsonl;
use ropelab_tasks::toy::ToyVocab;
use ropelab_tasks::{AnswerLocation, QuestionLocation, TaskKind, TokenBudgeter};
use serde::Serialize;

use crate::exit::usage;
use crate::manifest::{manifest_path, RunManifest};
use crate::settings::Settings;

#[derive(Debug, Args)]
pub struct GenArgs {
    /// longchat-lines, altqa, ffqa or toy-retrieval.
    #[arg(long)]
    pub task: Option<String>,
    /// Samples per length.
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated target lengths in tokens.
    #[arg(long)]
    pub lengths: Option<String>,
    /// Fix the answer band (start, middle, end); QA tasks cycle bands otherwise.
    #[arg(long)]
    pub answer_loc: Option<String>,
    /// Fix the question side (start, end); QA tasks alternate otherwise.
    #[arg(long)]
    pub question_loc: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// QA records as JSON Lines; the bundled sample corpus by default.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// `<sha256> <count>` lines from an external tokenizer.
    #[arg(long)]
    pub token_counts: Option<PathBuf>,
    /// Key-value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset path (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct GenConfig {
    task: String,
    count: usize,
    lengths: Vec<usize>,
    answer_loc: Option<String>,
    question_loc: Option<String>,
    seed: u64,
    records: Option<String>,
    token_counts: Option<String>,
    budgeter: &'static str,
    chars_per_token: Option<f64>,
    n_keys: u32,
    n_values: u32,
}

pub fn run(args: GenArgs) -> Result<()> {
    let mut s = Settings::load(args.config.as_deref())?;
    s.flag("task", args.task);
    s.flag("count", args.count);
    s.flag("lengths", args.lengths);
    s.flag("answer_loc", args.answer_loc);
    s.flag("question_loc", args.question_loc);
    s.flag("seed", args.seed);
    s.flag("records", args.records.map(|p| p.display().to_string()));
    s.flag("token_counts", args.token_counts.map(|p| p.display().to_string()));

    let task: TaskKind = s
        .take::<TaskKind>("task")?
        .ok_or_else(|| usage("`task` is required"))?;
    let count: usize = s.take_or("count", 10)?;
    let lengths: Vec<usize> = s
        .take_list("lengths")?
        .ok_or_else(|| usage("`lengths` is required"))?;
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(usage("`lengths` must list positive token counts"));
    }
    let answer_loc: Option<AnswerLocation> = s.take("answer_loc")?;
    let question_loc: Option<QuestionLocation> = s.take("question_loc")?;
    let seed: u64 = s.take_or("seed", 0)?;
    let records_path: Option<String> = s.take("records")?;
    let counts_path: Option<String> = s.take("token_counts")?;
    let chars_per_token: Option<f64> = s.take("chars_per_token")?;
    let defaults = ToyVocab::default();
    let vocab = ToyVocab {
        n_keys: s.take_or("n_keys", defaults.n_keys)?,
        n_values: s.take_or("n_values", defaults.n_values)?,
    };
    s.finish()?;

    let budgeter = match (&counts_path, chars_per_token) {
        (Some(_), Some(_)) => return Err(usage("give either token_counts or chars_per_token")),
        (Some(p), None) => TokenBudgeter::external_from_file(p.as_ref())?,
        (None, Some(c)) => TokenBudgeter::approximate(c).map_err(|e| usage(e.to_string()))?,
        (None, None) => TokenBudgeter::default(),
    };
    let records = match &records_path {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("cannot open records {p}"))?;
            read_records(BufReader::new(f), p)?
        }
        None => sample_corpus(),
    };

    let config = GenConfig {
        task: task.to_string(),
        count,
        lengths: lengths.clone(),
        answer_loc: answer_loc.map(|a| a.to_string()),
        question_loc: question_loc.map(|q| q.to_string()),
        seed,
        records: records_path,
        token_counts: counts_path,
        budgeter: budgeter.mode(),
        chars_per_token,
        n_keys: vocab.n_keys,
        n_values: vocab.n_values,
    };
    RunManifest::new("gen", &config, Some(seed), &[&args.out]).write(&manifest_path(&args.out))?;

    let mut samples = Vec::with_capacity(count * lengths.len());
    for (li, &len) in lengths.iter().enumerate() {
        // Sample seeds run on across lengths: the i-th sample overall has
        // seed `seed + i`.
        let offset = li * count;
        let spec = GenSpec {
            task,
            count,
            target_tokens: len,
            base_seed: seed.wrapping_add(offset as u64),
            answer_location: answer_loc,
            question_location: question_loc,
            budgeter: budgeter.clone(),
            toy_vocab: vocab,
        };
        for (i, mut sample) in generate(&spec, &records)?.into_iter().enumerate() {
            sample.id = format!("{task}-{:06}", offset + i);
            samples.push(sample);
        }
    }
    let file = File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &samples)?;
    w.flush()?;
    eprintln!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}
