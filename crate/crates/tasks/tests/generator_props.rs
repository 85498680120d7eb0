use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use ropelab_tasks::dataset::{generate, GenSpec};
use ropelab_tasks::lines::{gen_longchat_lines, lines_for_budget, parse_lines_prompt};
use ropelab_tasks::mutate::mutate_numeric_answer;
use ropelab_tasks::qa::sample_corpus;
use ropelab_tasks::sample::write_jsonl;
use ropelab_tasks::toy::{gen_toy_retrieval, ToyVocab, QUERY};
use ropelab_tasks::{TaskKind, TokenBudgeter};

#[test]
fn lines_match_the_record_format() {
    let re = Regex::new(r"^line [a-z]+-[a-z]+: REGISTER_CONTENT is <[0-9]+>$").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = gen_longchat_lines(40, 100, 7, &mut rng).unwrap();
    let lines: Vec<&str> = s.prompt.lines().filter(|l| l.starts_with("line ")).collect();
    assert_eq!(lines.len(), 40);
    for l in lines {
        assert!(re.is_match(l), "{l}");
    }
}

#[test]
fn ten_thousand_lines_samples_reparse() {
    let value_re = Regex::new(r"<([0-9]+)>$").unwrap();
    for seed in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gen_longchat_lines(50, 600, seed, &mut rng).unwrap();
        let (records, query) = parse_lines_prompt(&s.prompt).unwrap();
        assert_eq!(records.len(), 50);
        let keys: HashSet<&str> = records.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys.len(), 50, "duplicate key in seed {seed}");
        // Independent re-parse of the queried line's value.
        let line = s
            .prompt
            .lines()
            .find(|l| l.starts_with(&format!("line {query}:")))
            .unwrap();
        let value: u32 = value_re.captures(line).unwrap()[1].parse().unwrap();
        assert_eq!(s.answer, value.to_string());
        assert!((1000..=99999).contains(&value));
    }
}

/// Rule check written without reference to the generator's code paths.
fn mutation_violation(original: &str, mutated: &str) -> Option<String> {
    let o: i64 = original.parse().unwrap();
    let m: i64 = match mutated.parse() {
        Ok(m) => m,
        Err(_) => return Some("not numeric".into()),
    };
    if m == o {
        return Some("unchanged".into());
    }
    if original.len() == 4 && (1000..=2100).contains(&o) {
        if (m - o).abs() > 10 || !(1000..=2100).contains(&m) {
            return Some(format!("year {o} -> {m}"));
        }
    } else if mutated.len() != original.len() || (mutated.len() > 1 && mutated.starts_with('0')) {
        return Some(format!("digit count {original} -> {mutated}"));
    }
    None
}

#[test]
fn ten_thousand_mutations_follow_the_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = Vec::new();
    for i in 0..10_000 {
        let original = match i % 4 {
            0 => rng.random_range(1000..=2100u64).to_string(),
            1 => rng.random_range(0..10u64).to_string(),
            2 => rng.random_range(10..100_000u64).to_string(),
            _ => [1000u64, 1001, 2099, 2100, 999, 2101, 10, 99][i % 8].to_string(),
        };
        let mutated = mutate_numeric_answer(&original, &mut rng).unwrap();
        if let Some(v) = mutation_violation(&original, &mutated) {
            violations.push(v);
        }
    }
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn year_mutations_cover_the_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seen: HashSet<String> = (0..2000)
        .map(|_| mutate_numeric_answer("1969", &mut rng).unwrap())
        .collect();
    let want: HashSet<String> = (1959..=1979)
        .filter(|&y| y != 1969)
        .map(|y: i32| y.to_string())
        .collect();
    assert_eq!(seen, want);
}

#[test]
fn five_digit_mutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let m: u32 = mutate_numeric_answer("42527", &mut rng).unwrap().parse().unwrap();
        assert!((10000..=99999).contains(&m) && m != 42527);
    }
}

#[test]
fn lines_budget_round_trip() {
    let b = TokenBudgeter::default();
    for target in [500usize, 2500, 7100] {
        let n = lines_for_budget(target, &b).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gen_longchat_lines(n, target, seed, &mut rng).unwrap();
            let measured = b.count(&s.prompt).unwrap() as f64;
            assert!(
                (measured - target as f64).abs() <= 0.15 * target as f64,
                "target {target}: {measured}"
            );
        }
    }
}

#[test]
fn toy_retrieval_reparse() {
    let vocab = ToyVocab::default();
    for seed in 0..2000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1 + (seed as usize % 126);
        let s = gen_toy_retrieval(n, &vocab, &mut rng).unwrap();
        let body = &s.tokens[1..s.tokens.len() - 2];
        let keys: HashSet<u32> = body.iter().step_by(2).copied().collect();
        assert_eq!(keys.len(), n);
        assert!(body.iter().step_by(2).all(|&k| vocab.is_key(k)));
        assert!(body.iter().skip(1).step_by(2).all(|&v| vocab.is_value(v)));
        assert_eq!(s.tokens[s.tokens.len() - 2], QUERY);
        let q = *s.tokens.last().unwrap();
        let pos = body.iter().step_by(2).position(|&k| k == q).unwrap();
        assert_eq!(body[2 * pos + 1], s.answer);
        assert_eq!(s.tokens[s.answer_index], s.answer);
    }
}

fn dataset_bytes(task: TaskKind, seed: u64) -> Vec<u8> {
    let mut spec = GenSpec::new(task, 12, 600, seed);
    if task == TaskKind::ToyRetrieval {
        spec.target_tokens = 64;
    }
    let samples = generate(&spec, &sample_corpus()).unwrap();
    let mut out = Vec::new();
    write_jsonl(&mut out, &samples).unwrap();
    out
}

#[test]
fn datasets_are_byte_deterministic() {
    for task in [
        TaskKind::LongchatLines,
        TaskKind::Altqa,
        TaskKind::Ffqa,
        TaskKind::ToyRetrieval,
    ] {
        let a = dataset_bytes(task, 42);
        assert_eq!(a, dataset_bytes(task, 42), "{task}");
        assert_ne!(a, dataset_bytes(task, 43), "{task}");
    }
}

#[test]
fn per_sample_seeds_are_independent_of_count() {
    let corpus = sample_corpus();
    let small = generate(&GenSpec::new(TaskKind::LongchatLines, 3, 300, 9), &corpus).unwrap();
    let large = generate(&GenSpec::new(TaskKind::LongchatLines, 8, 300, 9), &corpus).unwrap();
    assert_eq!(small[..], large[..3]);
    assert_eq!(large[5].seed, 14);
}

proptest! {
    #[test]
    fn budget_monotone_in_target(a in 0usize..6000, b in 0usize..6000) {
        let bud = TokenBudgeter::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(lines_for_budget(lo, &bud).unwrap() <= lines_for_budget(hi, &bud).unwrap());
    }

    #[test]
    fn approximate_count_monotone_under_concatenation(x in ".{0,200}", y in ".{0,200}") {
        let bud = TokenBudgeter::default();
        let joined = format!("{x}{y}");
        let c = bud.count(&joined).unwrap();
        prop_assert!(c >= bud.count(&x).unwrap());
        prop_assert!(c >= bud.count(&y).unwrap());
        if !joined.is_empty() {
            prop_assert!(c >= 1);
        }
    }

    #[test]
    fn mutation_rules_hold(v in 0u64..1_000_000_000, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = v.to_string();
        let m = mutate_numeric_answer(&s, &mut rng).unwrap();
        prop_assert_eq!(mutation_violation(&s, &m), None);
    }
}
