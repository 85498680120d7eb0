use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ropelab_eval::score::read_outputs;
use ropelab_eval::{aggregate, render_tables, TableFormat, DEFAULT_BUCKETS};
use ropelab_tasks::TaskKind;
use serde::Serialize;

use crate::commands::toy_eval::read_dataset;
use crate::manifest::{manifest_path, sibling, RunManifest};
use crate::settings::Settings;

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model outputs as JSON Lines of `{"id", "output"}`.
    #[arg(long)]
    pub outputs: PathBuf,
    /// Context-length buckets; the standard grid by default, exact
    /// lengths for toy-retrieval datasets.
    #[arg(long)]
    pub lengths: Option<String>,
    /// Table printed to stdout: csv or markdown.
    #[arg(long)]
    pub format: Option<String>,
    /// Key-value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output prefix; writes `<out>.csv`, `<out>.md` and `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ScoreConfig {
    dataset: String,
    outputs: String,
    buckets: Vec<usize>,
    format: String,
}

pub fn run(args: ScoreArgs) -> Result<()> {
    let mut s = Settings::load(args.config.as_deref())?;
    s.flag("lengths", args.lengths);
    s.flag("format", args.format);
    let buckets: Option<Vec<usize>> = s.take_list("lengths")?;
    let format_name: String = s.take_or("format", "csv".to_string())?;
    let format: TableFormat = format_name
        .parse()
        .map_err(|e: ropelab_eval::Error| crate::exit::usage(e.to_string()))?;
    s.finish()?;

    let samples = read_dataset(&args.dataset)?;
    let buckets = buckets.unwrap_or_else(|| {
        if !samples.is_empty() && samples.iter().all(|s| s.task == TaskKind::ToyRetrieval) {
            Vec::new()
        } else {
            DEFAULT_BUCKETS.to_vec()
        }
    });
    let csv = sibling(&args.out, ".csv");
    let md = sibling(&args.out, ".md");
    let json = sibling(&args.out, ".json");
    let config = ScoreConfig {
        dataset: args.dataset.display().to_string(),
        outputs: args.outputs.display().to_string(),
        buckets: buckets.clone(),
        format: format_name,
    };
    RunManifest::new("score", &config, None, &[&csv, &md, &json]).write(&manifest_path(&args.out))?;

    let f = File::open(&args.outputs)
        .with_context(|| format!("cannot open outputs {}", args.outputs.display()))?;
    let outputs = read_outputs(BufReader::new(f), &args.outputs.display().to_string())?;
    let report = aggregate(&samples, &outputs, &buckets)?;
    std::fs::write(&csv, render_tables(&report, TableFormat::Csv))?;
    std::fs::write(&md, render_tables(&report, TableFormat::Markdown))?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(&json, text)?;
    print!("{}", render_tables(&report, format));
    Ok(())
}
