//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.
//!
//! `cargo test -p ropelab-cli --test acceptance`; pass criterion numbers as
//! arguments to run a subset.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ropelab_cli::toy_run::ToyRunConfig;
use ropelab_core::attention::{scores, HeadTensor};
use ropelab_core::encoding::{
    linear_positions, power_basis, rope_basis, truncated_basis, xpos_decay, PositionSchedule, PowerParams,
    Precision, ScaleParams, TruncationParams, XPosParams,
};
use ropelab_core::{EncodingConfig, Scheme};
use ropelab_eval::perplexity::{windows, UniformProvider};
use ropelab_eval::{perplexity, LogProbProvider};
use ropelab_oracle::dd::{rope_freqs, Dd};
use ropelab_tasks::dataset::{generate, GenSpec};
use ropelab_tasks::lines::{gen_longchat_lines, parse_lines_prompt};
use ropelab_tasks::mutate::mutate_numeric_answer;
use ropelab_tasks::qa::sample_corpus;
use ropelab_tasks::sample::write_jsonl;
use ropelab_tasks::TaskKind;
use ropelab_toy::train::evaluate;
use ropelab_toy::{ModelConfig, ToyModel};
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn basis_exactness() -> Outcome {
    let unit = Dd::pi() * Dd::from_f64(2.0) / Dd::from_f64(2048.0);
    let (a, b, rho) = (unit / Dd::from_f64(8.0), unit, unit / Dd::from_f64(16.0));
    let params = TruncationParams::default();
    let mut worst: f64 = 0.0;
    for (p, o) in [(params.a, a), (params.b, b), (params.rho, rho)] {
        worst = worst.max(rel(p, o.to_f64()));
    }
    for d in [2usize, 4, 64, 128] {
        let theta = rope_freqs(d, 10000.0);
        let rope = rope_basis(d, 10000.0).map_err(|e| e.to_string())?;
        let power = power_basis(d, 10000.0, &PowerParams { k: 0.5 }).map_err(|e| e.to_string())?;
        let trunc = truncated_basis(d, 10000.0, &params).map_err(|e| e.to_string())?;
        for (j, t) in theta.iter().enumerate() {
            let i = j + 1;
            let want_power = if i == d / 2 {
                Dd::ZERO
            } else {
                *t * (Dd::ONE - Dd::from_ratio(2 * i as i64, d as i64)).powd(Dd::from_f64(0.5))
            };
            let want_trunc = if *t >= b {
                *t
            } else if *t > a {
                rho
            } else {
                Dd::ZERO
            };
            worst = worst
                .max(rel(rope.freqs()[j], t.to_f64()))
                .max(rel(power.freqs()[j], want_power.to_f64()))
                .max(rel(trunc.freqs()[j], want_trunc.to_f64()));
        }
    }
    ensure(worst <= 1e-12, format!("max relative error {worst:.2e} (limit 1e-12)"))
}

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> HeadTensor {
    let mut data = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    for mut row in data.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    HeadTensor::new(data).expect("finite")
}

fn shift_invariance() -> Outcome {
    let d = 64;
    let basis = rope_basis(d, 10000.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = unit_rows(&mut rng, 2, d);
        let k = unit_rows(&mut rng, 2, d);
        let gap = rng.random_range(1..2048) as f64;
        let shift = rng.random_range(1..8192) as f64;
        let at = PositionSchedule::new(vec![0.0, gap]).map_err(|e| e.to_string())?;
        let moved = at.shifted(shift).map_err(|e| e.to_string())?;
        let s0 = scores(&q, &k, &at, &basis, None, true).map_err(|e| e.to_string())?;
        let s1 = scores(&q, &k, &moved, &basis, None, true).map_err(|e| e.to_string())?;
        for (m, n) in [(0, 0), (1, 0), (1, 1)] {
            worst = worst.max((s0.get(m, n) - s1.get(m, n)).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max drift {worst:.2e} over 1000 triples (limit 1e-6)"))
}

fn rescaling_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let basis = rope_basis(64, 10000.0).map_err(|e| e.to_string())?;
    let n = 64;
    let q = HeadTensor::new(Array2::from_shape_fn((n, 64), |_| rng.random_range(-1.0..1.0))).unwrap();
    let k = HeadTensor::new(Array2::from_shape_fn((n, 64), |_| rng.random_range(-1.0..1.0))).unwrap();
    let mut checked = 0;
    for x in [1.0, 2.0, 4.0, 8.0] {
        let doubled = linear_positions(n, &ScaleParams::uniform(2.0 * x)).map_err(|e| e.to_string())?;
        let halves = PositionSchedule::new((0..n).map(|j| (j as f64 / 2.0) / x).collect()).unwrap();
        let a = scores(&q, &k, &doubled, &basis, None, true).map_err(|e| e.to_string())?;
        let b = scores(&q, &k, &halves, &basis, None, true).map_err(|e| e.to_string())?;
        let same = a
            .data()
            .iter()
            .zip(b.data().iter())
            .all(|(u, v)| u.to_bits() == v.to_bits());
        if !same {
            return Err(format!("scale {x}: scores differ"));
        }
        checked += 1;
    }
    Ok(format!("bitwise equal for {checked} scales"))
}

fn xpos_cancellation() -> Outcome {
    let (d, gamma, scale_base) = (64, 0.4, 512.0);
    let xp = XPosParams::from_gamma(d, gamma, scale_base, Precision::Wide).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m: f64 = rng.random_range(0.0..32768.0);
        let n: f64 = rng.random_range(0.0..=m);
        let up = xpos_decay(d, &xp, m).map_err(|e| e.to_string())?;
        let down = xpos_decay(d, &xp, -n).map_err(|e| e.to_string())?;
        for i in 0..d / 2 {
            let zeta = (2.0 * i as f64 / d as f64 + gamma) / (1.0 + gamma);
            let want = zeta.powf((m - n) / scale_base);
            worst = worst.max(rel(up[i] * down[i], want));
        }
    }
    if worst > 1e-6 {
        return Err(format!("max relative error {worst:.2e} (limit 1e-6)"));
    }
    let narrow = xp.with_precision(Precision::Narrow);
    let basis = rope_basis(d, 10000.0).map_err(|e| e.to_string())?;
    let q = HeadTensor::new(Array2::from_elem((2, d), 0.5)).unwrap();
    let far = PositionSchedule::new(vec![0.0, 32768.0]).unwrap();
    match scores(&q, &q, &far, &basis, Some(&narrow), true) {
        Err(ropelab_core::Error::NumericOverflow { .. }) => Ok(format!(
            "max relative error {worst:.2e}; narrow mode overflows at 32768"
        )),
        Err(e) => Err(format!("narrow mode failed with the wrong error: {e}")),
        Ok(_) => Err("narrow mode at 32768 did not report overflow".into()),
    }
}

fn gradient_check() -> Outcome {
    let config = ModelConfig {
        vocab: 20,
        d_model: 32,
        n_heads: 2,
        head_dim: 16,
        n_layers: 2,
        ff_mult: 2,
        train_ctx: 16,
        encoding: EncodingConfig::new(Scheme::Rope, 16),
        seed: 5,
    };
    let model = ToyModel::new(config).map_err(|e| e.to_string())?;
    let enc = model.config.encoding.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tokens: Vec<u32> = (0..12).map(|_| rng.random_range(0..20)).collect();
    let targets: Vec<Option<u32>> = (0..12).map(|_| Some(rng.random_range(0..20))).collect();
    let (_, grads) = model.backward(&tokens, &targets, &enc).map_err(|e| e.to_string())?;
    let analytic = grads.to_flat();
    let base = model.params.to_flat();
    let loss_at = |flat: &[f64]| {
        let mut m = model.clone();
        m.params.load_flat(flat).expect("same length");
        let logits = m.forward(&tokens, &enc).expect("forward");
        ropelab_toy::loss(&logits, &targets).expect("loss")
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let i = rng.random_range(0..base.len());
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.2e} over 200 coordinates (limit 1e-4)"))
}

fn mutation_violation(original: &str, mutated: &str) -> Option<String> {
    let o: i64 = original.parse().ok()?;
    let Ok(m) = mutated.parse::<i64>() else {
        return Some(format!("{original} -> non-numeric {mutated}"));
    };
    if m == o {
        return Some(format!("{original} unchanged"));
    }
    let is_year = original.len() == 4 && (1000..=2100).contains(&o);
    if is_year {
        if (m - o).abs() > 10 || !(1000..=2100).contains(&m) {
            return Some(format!("year {o} -> {m}"));
        }
    } else if mutated.len() != original.len() || (mutated.len() > 1 && mutated.starts_with('0')) {
        return Some(format!("digit count {original} -> {mutated}"));
    }
    None
}

fn dataset_bytes(task: TaskKind, seed: u64) -> Vec<u8> {
    let target = if task == TaskKind::ToyRetrieval { 128 } else { 800 };
    let samples = generate(&GenSpec::new(task, 20, target, seed), &sample_corpus()).expect("generates");
    let mut out = Vec::new();
    write_jsonl(&mut out, &samples).expect("serializes");
    out
}

fn generator_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = Vec::new();
    for i in 0..10_000 {
        let original = match i % 3 {
            0 => rng.random_range(1000..=2100u64).to_string(),
            1 => rng.random_range(0..10u64).to_string(),
            _ => rng.random_range(10..10_000_000u64).to_string(),
        };
        let mutated = mutate_numeric_answer(&original, &mut rng).map_err(|e| e.to_string())?;
        violations.extend(mutation_violation(&original, &mutated));
    }
    if !violations.is_empty() {
        return Err(format!("{} mutation violations, first: {}", violations.len(), violations[0]));
    }
    for seed in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gen_longchat_lines(30, 400, seed, &mut rng).map_err(|e| e.to_string())?;
        let (records, query) = parse_lines_prompt(&s.prompt).ok_or(format!("seed {seed}: prompt does not parse"))?;
        let keys: HashSet<&str> = records.iter().map(|(k, _)| k.as_str()).collect();
        if keys.len() != records.len() {
            return Err(format!("seed {seed}: duplicate keys"));
        }
        // Re-read the answer straight from the text.
        let line = s
            .prompt
            .lines()
            .find(|l| l.starts_with(&format!("line {query}:")))
            .ok_or(format!("seed {seed}: queried line missing"))?;
        let value = line.rsplit('<').next().unwrap_or("").trim_end_matches('>');
        if value != s.answer {
            return Err(format!("seed {seed}: answer {} but line says {value}", s.answer));
        }
    }
    for task in [TaskKind::LongchatLines, TaskKind::Altqa, TaskKind::Ffqa, TaskKind::ToyRetrieval] {
        if dataset_bytes(task, 9) != dataset_bytes(task, 9) {
            return Err(format!("{task}: same seed gave different bytes"));
        }
    }
    Ok("10000 mutations and 10000 lines samples clean; datasets byte-stable".into())
}

struct Spy(Vec<usize>);

impl LogProbProvider for Spy {
    fn log_probs(&mut self, tokens: &[u32]) -> ropelab_eval::Result<Vec<f64>> {
        self.0.push(tokens.len());
        Ok(vec![0.0; tokens.len() - 1])
    }
}

fn perplexity_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for v in [2usize, 256, 32000] {
        let doc: Vec<u32> = (0..3000).map(|_| rng.random_range(0..v as u32)).collect();
        for n in [512, 1024] {
            let r = perplexity(&mut UniformProvider { vocab: v }, &doc, n, 256).map_err(|e| e.to_string())?;
            worst = worst.max((r.perplexity - v as f64).abs());
        }
    }
    if worst > 1e-9 {
        return Err(format!("uniform perplexity off by {worst:.2e} (limit 1e-9)"));
    }
    for n in [257, 512, 2048] {
        for w in windows(5000, n, 256).map_err(|e| e.to_string())? {
            if w.prompt.len() != n - 256 || w.eval.len() != 256 || w.prompt.end != w.eval.start {
                return Err(format!("N={n}: window {w:?}"));
            }
        }
        let mut spy = Spy(Vec::new());
        let doc: Vec<u32> = (0..5000).map(|i| i % 7).collect();
        let r = perplexity(&mut spy, &doc, n, 256).map_err(|e| e.to_string())?;
        if spy.0.iter().any(|&len| len != n) || r.tokens_scored != 256 * r.windows {
            return Err(format!("N={n}: provider saw lengths {:?}", spy.0));
        }
    }
    Ok(format!("max |ppl - V| {worst:.2e}; windows hold N-256 prompt and 256 scored tokens"))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn toy_trend() -> Outcome {
    let start = Instant::now();
    let scales = [1.0, 2.0, 4.0, 8.0];
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); scales.len()];
    for seed in 0..3 {
        let cfg = ToyRunConfig {
            seed,
            ..ToyRunConfig::default()
        };
        let run = cfg.run().map_err(|e| format!("seed {seed}: {e:#}"))?;
        let eval = cfg.eval_examples(256, 200).map_err(|e| e.to_string())?;
        let mut row = Vec::new();
        for (i, &s) in scales.iter().enumerate() {
            let enc = run.model.config.encoding.with_eval_scale(s);
            let (_, a) = evaluate(&run.model, &eval, &enc).map_err(|e| e.to_string())?;
            acc[i].push(a);
            row.push(format!("{a:.3}"));
        }
        eprintln!("  seed {seed}: accuracy at 256 for eval_scale 1/2/4/8 = {}", row.join(" / "));
    }
    let m: Vec<f64> = acc.into_iter().map(median).collect();
    let elapsed = start.elapsed();
    let detail = format!(
        "median accuracy at 256: s1 {:.3}, s2 {:.3}, s4 {:.3}, s8 {:.3}; {:.0} s",
        m[0],
        m[1],
        m[2],
        m[3],
        elapsed.as_secs_f64()
    );
    ensure(
        m[1] > m[0] && m[3] <= m[1] && elapsed < Duration::from_secs(30 * 60),
        detail,
    )
}

fn ropelab(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ropelab"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn sha256(path: &Path) -> Result<String, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn pipeline_once(dir: &Path) -> Result<Vec<String>, String> {
    std::fs::write(
        dir.join("model.cfg"),
        "d_model = 32\nn_heads = 2\nhead_dim = 16\ntrain_ctx = 32\nn_keys = 32\nn_values = 8\n\
         steps = 100\nbatch_size = 8\nlr = 3e-3\neval_count = 20\n",
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(dir.join("gen.cfg"), "n_keys = 32\nn_values = 8\n").map_err(|e| e.to_string())?;
    ropelab(dir, &["toy-train", "--config", "model.cfg", "--seed", "3", "--out", "model.json"])?;
    ropelab(
        dir,
        &["gen", "--config", "gen.cfg", "--task", "toy-retrieval", "--count", "30", "--lengths", "32,64", "--seed", "5", "--out", "data.jsonl"],
    )?;
    ropelab(dir, &["toy-eval", "--checkpoint", "model.json", "--dataset", "data.jsonl", "--out", "outputs.jsonl"])?;
    ropelab(dir, &["score", "--dataset", "data.jsonl", "--outputs", "outputs.jsonl", "--out", "report"])?;
    ["model.json", "data.jsonl", "outputs.jsonl", "report.csv", "report.md", "report.json"]
        .iter()
        .map(|f| sha256(&dir.join(f)))
        .collect()
}

fn reproducibility() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ha = pipeline_once(a.path())?;
    let hb = pipeline_once(b.path())?;
    ensure(
        ha == hb,
        format!("dataset {}, outputs {}, report {}", &ha[1][..12], &ha[2][..12], &ha[3][..12]),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "basis exactness", basis_exactness),
        (2, "relative-position invariance", shift_invariance),
        (3, "zero-shot rescaling identity", rescaling_identity),
        (4, "xPos cancellation and overflow", xpos_cancellation),
        (5, "gradient correctness", gradient_check),
        (6, "generator properties", generator_properties),
        (7, "perplexity protocol", perplexity_protocol),
        (8, "toy extrapolation trend", toy_trend),
        (9, "end-to-end reproducibility", reproducibility),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
