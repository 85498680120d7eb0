//! Batch generation with per-sample seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lines::{gen_longchat_lines, lines_for_budget};
use crate::qa::{build_altqa_sample, build_ffqa_sample, Placement, QARecord};
use crate::sample::{AnswerLocation, QuestionLocation, TaskKind, TaskSample};
use crate::toy::{gen_toy_retrieval, toy_sample, ToyVocab};
use crate::{Error, Result, TokenBudgeter};

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub task: TaskKind,
    pub count: usize,
    pub target_tokens: usize,
    pub base_seed: u64,
    /// Fixed answer band for QA tasks; `None` cycles through all bands.
    pub answer_location: Option<AnswerLocation>,
    /// Fixed question position for QA tasks; `None` alternates.
    pub question_location: Option<QuestionLocation>,
    pub budgeter: TokenBudgeter,
    pub toy_vocab: ToyVocab,
}

impl GenSpec {
    pub fn new(task: TaskKind, count: usize, target_tokens: usize, base_seed: u64) -> Self {
        GenSpec {
            task,
            count,
            target_tokens,
            base_seed,
            answer_location: None,
            question_location: None,
            budgeter: TokenBudgeter::default(),
            toy_vocab: ToyVocab::default(),
        }
    }
}

/// Seed of sample `index`: the base seed plus the index.
pub fn sample_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

const ANSWER_BANDS: [AnswerLocation; 3] =
    [AnswerLocation::Start, AnswerLocation::Middle, AnswerLocation::End];
const QUESTION_SIDES: [QuestionLocation; 2] = [QuestionLocation::Start, QuestionLocation::End];

/// Generates `spec.count` samples. Sample `i` depends only on the spec and
/// `sample_seed(base_seed, i)`. QA tasks take record `i mod records.len()`
/// and pad with the other records' documents.
pub fn generate(spec: &GenSpec, records: &[QARecord]) -> Result<Vec<TaskSample>> {
    if spec.target_tokens == 0 {
        return Err(Error::Input("target_tokens must be positive".into()));
    }
    let num_lines = match spec.task {
        TaskKind::LongchatLines => lines_for_budget(spec.target_tokens, &spec.budgeter)?,
        _ => 0,
    };
    let qa_pool: Vec<&QARecord> = match spec.task {
        TaskKind::Altqa => records.iter().filter(|r| r.is_numeric()).collect(),
        TaskKind::Ffqa => records.iter().collect(),
        _ => Vec::new(),
    };
    if matches!(spec.task, TaskKind::Altqa | TaskKind::Ffqa) && qa_pool.is_empty() && spec.count > 0 {
        return Err(Error::Input(format!("no usable records for {}", spec.task)));
    }
    (0..spec.count)
        .map(|i| {
            let seed = sample_seed(spec.base_seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sample = match spec.task {
                TaskKind::LongchatLines => {
                    gen_longchat_lines(num_lines, spec.target_tokens, seed, &mut rng)?
                }
                TaskKind::ToyRetrieval => {
                    let pairs = ToyVocab::pairs_for_context(spec.target_tokens).max(1);
                    let r = gen_toy_retrieval(pairs, &spec.toy_vocab, &mut rng)?;
                    toy_sample(&r, seed)
                }
                TaskKind::Altqa | TaskKind::Ffqa => {
                    let record = qa_pool[i % qa_pool.len()];
                    let neighbors: Vec<String> = records
                        .iter()
                        .filter(|r| *r != record)
                        .map(|r| r.document.clone())
                        .collect();
                    let placement = Placement {
                        answer: spec.answer_location.unwrap_or(ANSWER_BANDS[i % 3]),
                        question: spec
                            .question_location
                            .unwrap_or(QUESTION_SIDES[(i / 3) % 2]),
                    };
                    let build = if spec.task == TaskKind::Altqa {
                        build_altqa_sample
                    } else {
                        build_ffqa_sample
                    };
                    build(
                        record,
                        placement,
                        spec.target_tokens,
                        &spec.budgeter,
                        &neighbors,
                        seed,
                        &mut rng,
                    )?
                }
            };
            sample.id = format!("{}-{i:06}", spec.task);
            Ok(sample)
        })
        .collect()
}
