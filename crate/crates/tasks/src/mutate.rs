//! Replacement values for numeric answers.

use rand::Rng;

use crate::{Error, Result};

pub const YEAR_MIN: u64 = 1000;
pub const YEAR_MAX: u64 = 2100;
pub const YEAR_WINDOW: i64 = 10;

/// Redraws allowed before a source is declared stuck.
const MAX_DRAWS: usize = 10_000;

/// Randomness consumed by [`mutate_with`]. Tests pin it; production code
/// wraps an RNG with [`RngSource`].
pub trait MutationSource {
    /// A nonzero offset in `[-10, 10]`.
    fn year_offset(&mut self) -> i64;
    /// A value in `lo..=hi`.
    fn uniform(&mut self, lo: u64, hi: u64) -> u64;
}

pub struct RngSource<'a, R: Rng + ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> MutationSource for RngSource<'_, R> {
    fn year_offset(&mut self) -> i64 {
        let k = self.0.random_range(0..2 * YEAR_WINDOW);
        if k < YEAR_WINDOW {
            k - YEAR_WINDOW
        } else {
            k - YEAR_WINDOW + 1
        }
    }

    fn uniform(&mut self, lo: u64, hi: u64) -> u64 {
        self.0.random_range(lo..=hi)
    }
}

/// True for values treated as calendar years.
pub fn is_year(value: u64) -> bool {
    (YEAR_MIN..=YEAR_MAX).contains(&value)
}

fn parse(answer: &str) -> Result<u64> {
    if answer.is_empty() || !answer.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Input(format!("`{answer}` is not a nonnegative integer")));
    }
    if answer.len() > 18 {
        return Err(Error::Input(format!("`{answer}` has too many digits")));
    }
    Ok(answer.parse().expect("validated digits"))
}

/// Years move by a nonzero offset of at most 10 and stay within
/// `[1000, 2100]`; out-of-range offsets are redrawn. Any other value becomes
/// a different number with the same digit count and no leading zero.
pub fn mutate_with(answer: &str, source: &mut dyn MutationSource) -> Result<String> {
    let value = parse(answer)?;
    let digits = answer.len() as u32;
    if digits == 4 && is_year(value) {
        for _ in 0..MAX_DRAWS {
            let off = source.year_offset();
            if off == 0 || off.abs() > YEAR_WINDOW {
                continue;
            }
            let cand = value as i64 + off;
            if (YEAR_MIN as i64..=YEAR_MAX as i64).contains(&cand) {
                return Ok(cand.to_string());
            }
        }
    } else {
        let (lo, hi) = if digits == 1 {
            (0, 9)
        } else {
            (10u64.pow(digits - 1), 10u64.pow(digits) - 1)
        };
        for _ in 0..MAX_DRAWS {
            let cand = source.uniform(lo, hi);
            if cand != value && (lo..=hi).contains(&cand) {
                return Ok(cand.to_string());
            }
        }
    }
    Err(Error::Consistency(format!(
        "no admissible replacement for `{answer}` after {MAX_DRAWS} draws"
    )))
}

pub fn mutate_numeric_answer<R: Rng + ?Sized>(answer: &str, rng: &mut R) -> Result<String> {
    mutate_with(answer, &mut RngSource(rng))
}
