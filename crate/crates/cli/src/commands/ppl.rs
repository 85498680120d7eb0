use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ropelab_eval::perplexity::{SubprocessProvider, ToyProvider, UniformProvider, DEFAULT_EVAL_LEN};
use ropelab_eval::{perplexity, LogProbProvider, PerplexityResult, TableFormat};
use ropelab_toy::checkpoint;
use serde::Serialize;

use crate::exit::usage;
use crate::manifest::{manifest_path, RunManifest};
use crate::settings::Settings;

#[derive(Debug, Args)]
pub struct PplArgs {
    /// Toy model checkpoint to score with.
    #[arg(long, group = "source")]
    pub checkpoint: Option<PathBuf>,
    /// External provider command, split on whitespace. It reads one JSON
    /// token list per line and answers with one JSON log-prob list.
    #[arg(long, group = "source")]
    pub provider: Option<String>,
    /// Uniform distribution over this many symbols.
    #[arg(long, group = "source")]
    pub uniform: Option<usize>,
    /// Token ids separated by whitespace or commas.
    #[arg(long)]
    pub document: PathBuf,
    /// Comma-separated context sizes N.
    #[arg(long)]
    pub lengths: Option<String>,
    /// Scored tokens at the end of each window.
    #[arg(long)]
    pub eval_len: Option<usize>,
    /// Inference-time linear position scale for a checkpoint.
    #[arg(long)]
    pub eval_scale: Option<f64>,
    /// Table printed to stdout: csv or markdown.
    #[arg(long)]
    pub format: Option<String>,
    /// Key-value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV table path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PplConfig {
    provider: String,
    document: String,
    lengths: Vec<usize>,
    eval_len: usize,
    eval_scale: Option<f64>,
}

pub fn read_document(text: &str) -> Result<Vec<u32>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("`{t}` is not a token id")))
        .collect()
}

pub fn render(results: &[PerplexityResult], format: TableFormat) -> String {
    let header = ["context", "eval_len", "windows", "tokens_scored", "mean_nll", "perplexity"];
    let rows: Vec<[String; 6]> = results
        .iter()
        .map(|r| {
            [
                r.context.to_string(),
                r.eval_len.to_string(),
                r.windows.to_string(),
                r.tokens_scored.to_string(),
                format!("{:.6}", r.mean_nll),
                format!("{:.6}", r.perplexity),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let _ = writeln!(out, "{}", header.join(","));
            for r in &rows {
                let _ = writeln!(out, "{}", r.join(","));
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for r in &rows {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
        }
    }
    out
}

pub fn run(args: PplArgs) -> Result<()> {
    let mut s = Settings::load(args.config.as_deref())?;
    s.flag("lengths", args.lengths);
    s.flag("eval_len", args.eval_len);
    s.flag("scale_eval", args.eval_scale);
    s.flag("format", args.format);
    let lengths: Vec<usize> = s
        .take_list("lengths")?
        .ok_or_else(|| usage("`lengths` is required"))?;
    let eval_len: usize = s.take_or("eval_len", DEFAULT_EVAL_LEN)?;
    let eval_scale: Option<f64> = s.take("scale_eval")?;
    let format: TableFormat = s
        .take_or("format", "csv".to_string())?
        .parse()
        .map_err(|e: ropelab_eval::Error| usage(e.to_string()))?;
    s.finish()?;
    if lengths.is_empty() {
        return Err(usage("`lengths` must not be empty"));
    }

    let model = match &args.checkpoint {
        Some(p) => Some(checkpoint::load(p)?),
        None => None,
    };
    let (mut provider, name): (Box<dyn LogProbProvider + '_>, String) =
        match (&model, &args.provider, args.uniform) {
            (Some(m), _, _) => {
                let scale = eval_scale.unwrap_or(m.config.encoding.scale.train_scale);
                let encoding = m.config.encoding.with_eval_scale(scale);
                encoding.validate().map_err(|e| usage(e.to_string()))?;
                let name = format!("checkpoint:{}", args.checkpoint.as_ref().expect("set").display());
                (Box::new(ToyProvider { model: m, encoding }), name)
            }
            (None, Some(cmd), _) => {
                let mut parts = cmd.split_whitespace();
                let program = parts.next().ok_or_else(|| usage("empty provider command"))?;
                let rest: Vec<String> = parts.map(String::from).collect();
                (Box::new(SubprocessProvider::spawn(program, &rest)?), format!("command:{cmd}"))
            }
            (None, None, Some(v)) => (Box::new(UniformProvider { vocab: v }), format!("uniform:{v}")),
            (None, None, None) => return Err(usage("give one of --checkpoint, --provider, --uniform")),
        };
    let config = PplConfig {
        provider: name,
        document: args.document.display().to_string(),
        lengths: lengths.clone(),
        eval_len,
        eval_scale,
    };
    RunManifest::new("ppl", &config, None, &[&args.out]).write(&manifest_path(&args.out))?;

    let text = std::fs::read_to_string(&args.document)
        .with_context(|| format!("cannot read document {}", args.document.display()))?;
    let doc = read_document(&text)?;
    let results = lengths
        .iter()
        .map(|&n| perplexity(provider.as_mut(), &doc, n, eval_len))
        .collect::<ropelab_eval::Result<Vec<_>>>()?;
    std::fs::write(&args.out, render(&results, TableFormat::Csv))
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    print!("{}", render(&results, format));
    Ok(())
}
