use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ropelab_toy::checkpoint;

use crate::encoding::EncodingFlags;
use crate::manifest::{manifest_path, sibling, RunManifest};
use crate::settings::Settings;
use crate::toy_run::ToyRunConfig;

#[derive(Debug, Args)]
pub struct ToyTrainArgs {
    /// Key-value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub encoding: EncodingFlags,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// recall or constant.
    #[arg(long)]
    pub data: Option<String>,
    /// Checkpoint path; the loss curve goes to `<out>.train.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: ToyTrainArgs) -> Result<()> {
    let mut s = Settings::load(args.config.as_deref())?;
    s.flag("seed", args.seed);
    args.encoding.apply(&mut s);
    s.flag("steps", args.steps);
    s.flag("batch_size", args.batch_size);
    s.flag("lr", args.lr);
    s.flag("data", args.data);
    let config = ToyRunConfig::from_settings(s)?;

    let csv = sibling(&args.out, ".train.csv");
    let cont_csv = sibling(&args.out, ".continue.csv");
    let mut artifacts = vec![args.out.as_path(), csv.as_path()];
    if config.continue_scheme.is_some() {
        artifacts.push(cont_csv.as_path());
    }
    RunManifest::new("toy-train", &config.to_map(), Some(config.seed), &artifacts)
        .write(&manifest_path(&args.out))?;

    let run = config.run()?;
    checkpoint::save(&run.model, &args.out)?;
    std::fs::write(&csv, run.report.to_csv()).with_context(|| format!("cannot write {}", csv.display()))?;
    let mut last = &run.report;
    if let Some(c) = &run.continuation {
        std::fs::write(&cont_csv, c.to_csv())
            .with_context(|| format!("cannot write {}", cont_csv.display()))?;
        last = c;
    }
    eprintln!(
        "trained {} steps in {:.1}s; final train loss {:.4}",
        run.report.steps + run.continuation.as_ref().map_or(0, |c| c.steps),
        run.report.wall_time_secs + run.continuation.as_ref().map_or(0.0, |c| c.wall_time_secs),
        last.losses.last().copied().unwrap_or(f64::NAN),
    );
    if let (Some(loss), Some(acc)) = (last.final_eval_loss, last.eval_accuracy) {
        println!("eval_loss={loss:.6} eval_accuracy={acc:.4}");
    }
    Ok(())
}
