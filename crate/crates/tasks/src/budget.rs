use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Measures prompt length in tokens.
///
/// `Approximate` divides the character count by a fixed ratio.
/// `External` looks counts up in a table keyed by the SHA-256 of the text,
/// loaded from a sidecar file produced by a real tokenizer; texts missing
/// from the table are an error rather than a silent fallback.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenBudgeter {
    Approximate { chars_per_token: f64 },
    External { counts: HashMap<String, usize> },
}

impl Default for TokenBudgeter {
    fn default() -> Self {
        TokenBudgeter::Approximate {
            chars_per_token: 4.0,
        }
    }
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl TokenBudgeter {
    pub fn approximate(chars_per_token: f64) -> Result<Self> {
        if !(chars_per_token.is_finite() && chars_per_token > 0.0) {
            return Err(Error::Budget(format!(
                "chars_per_token must be positive, got {chars_per_token}"
            )));
        }
        Ok(TokenBudgeter::Approximate { chars_per_token })
    }

    /// Parses a sidecar table: one `<sha256-hex> <count>` pair per line.
    /// Blank lines and `#` comments are skipped.
    pub fn external_from_str(text: &str) -> Result<Self> {
        let mut counts = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Budget(format!("sidecar line {}: expected `<sha256> <count>`", i + 1));
            let mut parts = line.split_whitespace();
            let (Some(hash), Some(count), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad());
            };
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad());
            }
            let count: usize = count.parse().map_err(|_| bad())?;
            counts.insert(hash.to_ascii_lowercase(), count);
        }
        Ok(TokenBudgeter::External { counts })
    }

    pub fn external_from_file(path: &Path) -> Result<Self> {
        Self::external_from_str(&std::fs::read_to_string(path)?)
    }

    pub fn mode(&self) -> &'static str {
        match self {
            TokenBudgeter::Approximate { .. } => "approximate",
            TokenBudgeter::External { .. } => "external",
        }
    }

    pub fn count(&self, text: &str) -> Result<usize> {
        match self {
            TokenBudgeter::Approximate { chars_per_token } => {
                let chars = text.chars().count();
                Ok((chars as f64 / chars_per_token).ceil() as usize)
            }
            TokenBudgeter::External { counts } => {
                let key = text_digest(text);
                counts
                    .get(&key)
                    .copied()
                    .ok_or_else(|| Error::Budget(format!("no external count for text {key}")))
            }
        }
    }

    /// Characters per token used when sizing text before measuring it.
    pub(crate) fn sizing_ratio(&self) -> f64 {
        match self {
            TokenBudgeter::Approximate { chars_per_token } => *chars_per_token,
            TokenBudgeter::External { .. } => 4.0,
        }
    }
}
