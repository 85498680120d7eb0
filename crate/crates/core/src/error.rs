use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {0}: head dimension must be even and at least 2")]
    InvalidDimension(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("position schedule must contain at least one position")]
    EmptySequence,

    #[error("numeric overflow in narrow precision: component {component} at position {position} evaluates to {value:e}")]
    NumericOverflow {
        position: f64,
        component: usize,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}
