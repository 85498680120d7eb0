use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use ropelab_core::{EncodingConfig, Scheme};
use serde::Serialize;

use crate::encoding::encoding_map;
use crate::exit::usage;
use crate::manifest::{manifest_path, sibling, RunManifest};

#[derive(Debug, Args)]
pub struct BasisPlotArgs {
    /// Encoding config files, one curve each.
    #[arg(long)]
    pub config: Vec<PathBuf>,
    /// Schemes to plot with the flag parameters below; repeatable or
    /// comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub scheme: Vec<String>,
    /// Head dimension for `--scheme` curves.
    #[arg(long, default_value_t = 128)]
    pub d: usize,
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub power_k: Option<f64>,
    #[arg(long)]
    pub trunc_a: Option<f64>,
    #[arg(long)]
    pub trunc_b: Option<f64>,
    #[arg(long)]
    pub trunc_rho: Option<f64>,
    /// Output prefix; writes `<out>.csv` and `<out>.svg`.
    #[arg(long)]
    pub out: PathBuf,
}

pub struct Series {
    pub label: String,
    pub encoding: EncodingConfig,
    pub freqs: Vec<f64>,
}

#[derive(Serialize)]
struct SeriesEntry {
    label: String,
    encoding: std::collections::BTreeMap<String, String>,
}

fn series_from_flags(args: &BasisPlotArgs) -> Result<Vec<(String, EncodingConfig)>> {
    args.scheme
        .iter()
        .map(|name| {
            let scheme: Scheme = name.parse().map_err(|e: ropelab_core::Error| usage(e.to_string()))?;
            let mut enc = EncodingConfig::new(scheme, args.d);
            if let Some(b) = args.base {
                enc.base = b;
            }
            if let Some(k) = args.power_k {
                enc.power.k = k;
            }
            if let Some(a) = args.trunc_a {
                enc.truncation.a = a;
            }
            if let Some(b) = args.trunc_b {
                enc.truncation.b = b;
            }
            if let Some(r) = args.trunc_rho {
                enc.truncation.rho = r;
            }
            Ok((name.clone(), enc))
        })
        .collect()
}

fn series_from_file(path: &Path) -> Result<(String, EncodingConfig)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let enc = EncodingConfig::from_kv_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((label, enc))
}

/// One row per frequency: `series,scheme,d,index,theta`. Values print in
/// shortest round-trip form, so parsing them back is exact.
pub fn render_csv(series: &[Series]) -> String {
    let mut out = String::from("series,scheme,d,index,theta\n");
    for s in series {
        for (i, f) in s.freqs.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", s.label, s.encoding.scheme, s.encoding.d, i + 1, f);
        }
    }
    out
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Frequency against index, each series scaled to the unit interval of
/// its own index range.
pub fn render_svg(series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let ymax = series
        .iter()
        .flat_map(|s| s.freqs.iter().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<polyline points="{m},{m} {m},{} {},{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">dimension index i / (d/2)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">theta_i (max {ymax:.3})</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let n = s.freqs.len().max(2) - 1;
        let points: Vec<String> = s
            .freqs
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let x = m + (w - 2.0 * m) * i as f64 / n as f64;
                let y = h - m - (h - 2.0 * m) * f / ymax;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            w - m - 120.0,
            m + 15.0 * (k + 1) as f64,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn run(args: BasisPlotArgs) -> Result<()> {
    let mut specs = Vec::new();
    for p in &args.config {
        specs.push(series_from_file(p)?);
    }
    specs.extend(series_from_flags(&args)?);
    if specs.is_empty() {
        return Err(usage("give at least one --config or --scheme"));
    }
    let csv = sibling(&args.out, ".csv");
    let svg = sibling(&args.out, ".svg");
    let entries: Vec<SeriesEntry> = specs
        .iter()
        .map(|(label, enc)| SeriesEntry {
            label: label.clone(),
            encoding: encoding_map(enc),
        })
        .collect();
    RunManifest::new("basis-plot", &entries, None, &[&csv, &svg]).write(&manifest_path(&args.out))?;

    let series = specs
        .into_iter()
        .map(|(label, encoding)| {
            let freqs = encoding
                .basis()
                .map_err(|e| usage(format!("{label}: {e}")))?
                .freqs()
                .to_vec();
            Ok(Series { label, encoding, freqs })
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(&csv, render_csv(&series)).with_context(|| format!("cannot write {}", csv.display()))?;
    std::fs::write(&svg, render_svg(&series)).with_context(|| format!("cannot write {}", svg.display()))?;
    eprintln!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}
