use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ropelab_eval::report::bucket_for;
use ropelab_eval::score::answer_matches;
use ropelab_eval::{aggregate, render_tables, Error, OutputRecord, TableFormat, DEFAULT_BUCKETS};
use ropelab_tasks::sample::SAMPLE_SCHEMA;
use ropelab_tasks::{AnswerLocation, QuestionLocation, TaskKind, TaskSample};

fn sample(id: &str, tokens: usize, a: AnswerLocation, q: QuestionLocation, answer: &str) -> TaskSample {
    TaskSample {
        schema: SAMPLE_SCHEMA.into(),
        id: id.into(),
        task: TaskKind::Altqa,
        prompt: String::new(),
        answer: answer.into(),
        target_tokens: tokens,
        answer_location: a,
        question_location: q,
        num_lines: None,
        seed: 0,
    }
}

fn out(id: &str, text: &str) -> OutputRecord {
    OutputRecord {
        id: id.into(),
        output: text.into(),
    }
}

use AnswerLocation::{End as AEnd, Middle, Start as AStart};
use QuestionLocation::{End as QEnd, Start as QStart};

/// Eight samples over three strata, with correctness decided by hand.
fn fixture() -> (Vec<TaskSample>, Vec<OutputRecord>) {
    let samples = vec![
        sample("a", 2400, AStart, QEnd, "1742"),   // 2500 bucket, correct
        sample("b", 2700, AStart, QEnd, "1886"),   // 2500, wrong digits
        sample("c", 2600, AStart, QEnd, "214"),    // 2500, missing output
        sample("d", 3500, Middle, QEnd, "38250"),  // 3600, correct with noise
        sample("e", 3700, Middle, QEnd, "1911"),   // 3600, embedded in longer run
        sample("f", 3650, AEnd, QStart, "Ambry Gold"), // 3600, case-folded
        sample("g", 3600, AEnd, QStart, "640"),    // 3600, leading zero
        sample("h", 3620, AEnd, QStart, "1859"),   // 3600, wrong
    ];
    let outputs = vec![
        out("a", "1742"),
        out("b", "1887"),
        out("d", "The answer is <38250>."),
        out("e", "19110"),
        out("f", "it was AMBRY  gold!"),
        out("g", "0640"),
        out("h", "1858 or so"),
    ];
    (samples, outputs)
}

#[test]
fn stratified_counts_by_hand() {
    let (samples, outputs) = fixture();
    let r = aggregate(&samples, &outputs, &DEFAULT_BUCKETS).unwrap();
    let cells: Vec<(usize, AnswerLocation, QuestionLocation, usize, usize)> = r
        .rows
        .iter()
        .map(|x| (x.context_tokens, x.answer_location, x.question_location, x.tally.n, x.tally.correct))
        .collect();
    assert_eq!(
        cells,
        vec![
            (2500, AStart, QEnd, 3, 1),
            (3600, Middle, QEnd, 2, 1),
            (3600, AEnd, QStart, 3, 2),
        ]
    );
    assert_eq!((r.overall.n, r.overall.correct), (8, 4));
    assert_eq!(r.overall.accuracy, 0.5);
    assert_eq!(r.task, "altqa");
}

#[test]
fn golden_tables() {
    let (samples, outputs) = fixture();
    let r = aggregate(&samples, &outputs, &DEFAULT_BUCKETS).unwrap();
    assert_eq!(
        render_tables(&r, TableFormat::Csv),
        include_str!("fixtures/report.csv")
    );
    assert_eq!(
        render_tables(&r, TableFormat::Markdown),
        include_str!("fixtures/report.md")
    );
}

#[test]
fn pairing_errors() {
    let (samples, mut outputs) = fixture();
    outputs.push(out("zz", "1"));
    assert!(matches!(aggregate(&samples, &outputs, &DEFAULT_BUCKETS), Err(Error::Pairing(_))));
    let (samples, mut outputs) = fixture();
    outputs.push(out("a", "1742"));
    assert!(matches!(aggregate(&samples, &outputs, &DEFAULT_BUCKETS), Err(Error::Pairing(_))));
    let (mut samples, outputs) = fixture();
    samples.push(samples[0].clone());
    assert!(matches!(aggregate(&samples, &outputs, &DEFAULT_BUCKETS), Err(Error::Pairing(_))));
}

#[test]
fn empty_inputs_give_header_only() {
    let r = aggregate(&[], &[], &DEFAULT_BUCKETS).unwrap();
    assert_eq!(r.task, "none");
    assert_eq!(
        render_tables(&r, TableFormat::Csv),
        "task,context_tokens,answer_location,question_location,n,correct,accuracy\n"
    );
}

#[test]
fn numeric_boundaries() {
    assert!(answer_matches("7", "seven or 7"));
    assert!(!answer_matches("7", "17"));
    assert!(answer_matches("1976", "in 1976, then 2001"));
    assert!(!answer_matches("1976", "-19765"));
    assert!(answer_matches("0", "000"));
}

proptest! {
    #[test]
    fn order_does_not_matter(seed in any::<u64>()) {
        let (mut samples, mut outputs) = fixture();
        let base = aggregate(&samples, &outputs, &DEFAULT_BUCKETS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        samples.shuffle(&mut rng);
        outputs.shuffle(&mut rng);
        prop_assert_eq!(aggregate(&samples, &outputs, &DEFAULT_BUCKETS).unwrap(), base);
    }

    #[test]
    fn bucket_is_a_nearest_entry(t in 0usize..40_000) {
        let b = bucket_for(t, &DEFAULT_BUCKETS);
        prop_assert!(DEFAULT_BUCKETS.contains(&b));
        let best = DEFAULT_BUCKETS.iter().map(|x| x.abs_diff(t)).min().unwrap();
        prop_assert_eq!(b.abs_diff(t), best);
    }

    #[test]
    fn correct_never_exceeds_n(flags in proptest::collection::vec(any::<bool>(), 0..40)) {
        let samples: Vec<TaskSample> = (0..flags.len())
            .map(|i| sample(&format!("s{i}"), 1000 * (i % 5) + 2000, AStart, QEnd, "42"))
            .collect();
        let outputs: Vec<OutputRecord> = flags
            .iter()
            .enumerate()
            .map(|(i, &f)| out(&format!("s{i}"), if f { "42" } else { "43" }))
            .collect();
        let r = aggregate(&samples, &outputs, &DEFAULT_BUCKETS).unwrap();
        prop_assert_eq!(r.overall.correct, flags.iter().filter(|&&f| f).count());
        prop_assert_eq!(r.rows.iter().map(|x| x.tally.n).sum::<usize>(), flags.len());
    }
}
