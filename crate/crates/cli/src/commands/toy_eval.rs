use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ropelab_eval::score::write_outputs;
use ropelab_eval::{aggregate, render_tables, OutputRecord, TableFormat};
use ropelab_tasks::sample::read_jsonl;
use ropelab_tasks::toy::parse_toy_prompt;
use ropelab_tasks::{TaskKind, TaskSample};
use ropelab_toy::{checkpoint, ToyModel};
use serde::Serialize;

use crate::encoding::encoding_map;
use crate::manifest::{manifest_path, sibling, RunManifest};
use crate::settings::Settings;

#[derive(Debug, Args)]
pub struct ToyEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// toy-retrieval dataset from `gen`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Inference-time linear position scale; the training scale by default.
    #[arg(long)]
    pub eval_scale: Option<f64>,
    /// Key-value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Outputs path (JSON Lines); tables go to `<out>.report.csv` and `.md`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ToyEvalConfig {
    checkpoint: String,
    dataset: String,
    encoding: BTreeMap<String, String>,
}

pub fn read_dataset(path: &Path) -> Result<Vec<TaskSample>> {
    let f = File::open(path).with_context(|| format!("cannot open dataset {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(f), &path.display().to_string())?)
}

/// Greedy single-token answers for every toy-retrieval sample.
pub fn answer_all(model: &ToyModel, samples: &[TaskSample], eval_scale: f64) -> Result<Vec<OutputRecord>> {
    let enc = model.config.encoding.with_eval_scale(eval_scale);
    samples
        .iter()
        .map(|s| {
            if s.task != TaskKind::ToyRetrieval {
                bail!("sample `{}` is {}, only toy-retrieval can be run on the toy model", s.id, s.task);
            }
            let tokens = parse_toy_prompt(&s.prompt)?;
            let out = model.generate(&tokens, 1, &enc)?;
            Ok(OutputRecord {
                id: s.id.clone(),
                output: out[tokens.len()].to_string(),
            })
        })
        .collect()
}

pub fn run(args: ToyEvalArgs) -> Result<()> {
    let mut s = Settings::load(args.config.as_deref())?;
    s.flag("scale_eval", args.eval_scale);
    let eval_scale: Option<f64> = s.take("scale_eval")?;
    s.finish()?;

    let model = checkpoint::load(&args.checkpoint)?;
    let eval_scale = eval_scale.unwrap_or(model.config.encoding.scale.train_scale);
    let enc = model.config.encoding.with_eval_scale(eval_scale);
    enc.validate().map_err(|e| crate::exit::usage(e.to_string()))?;
    let report_csv = sibling(&args.out, ".report.csv");
    let report_md = sibling(&args.out, ".report.md");
    let config = ToyEvalConfig {
        checkpoint: args.checkpoint.display().to_string(),
        dataset: args.dataset.display().to_string(),
        encoding: encoding_map(&enc),
    };
    RunManifest::new(
        "toy-eval",
        &config,
        Some(model.config.seed),
        &[&args.out, &report_csv, &report_md],
    )
    .write(&manifest_path(&args.out))?;

    let samples = read_dataset(&args.dataset)?;
    let outputs = answer_all(&model, &samples, eval_scale)?;
    let file = File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_outputs(&mut w, &outputs)?;
    w.flush()?;

    let report = aggregate(&samples, &outputs, &[])?;
    std::fs::write(&report_csv, render_tables(&report, TableFormat::Csv))?;
    std::fs::write(&report_md, render_tables(&report, TableFormat::Markdown))?;
    print!("{}", render_tables(&report, TableFormat::Csv));
    Ok(())
}
