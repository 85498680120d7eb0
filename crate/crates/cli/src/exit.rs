//! Process exit codes and error classification.

use std::fmt;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;

/// Marks an error as a usage problem: bad flags, bad config file.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn is_numeric(e: &(dyn std::error::Error + 'static)) -> bool {
    if let Some(t) = e.downcast_ref::<ropelab_toy::Error>() {
        return match t {
            ropelab_toy::Error::Divergence { .. } => true,
            ropelab_toy::Error::Encoding(c) => matches!(c, ropelab_core::Error::NumericOverflow { .. }),
            _ => false,
        };
    }
    if let Some(ropelab_eval::Error::Model(t)) = e.downcast_ref::<ropelab_eval::Error>() {
        return is_numeric(t);
    }
    matches!(
        e.downcast_ref::<ropelab_core::Error>(),
        Some(ropelab_core::Error::NumericOverflow { .. })
    )
}

/// Exit code for a failed run.
pub fn code_for(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<UsageError>().is_some()) {
        USAGE
    } else if err.chain().any(is_numeric) {
        NUMERIC
    } else {
        DATA
    }
}
