use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("requested {requested} unique keys but only {available} exist")]
    Capacity { requested: usize, available: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("cannot place answer: {0}")]
    Placement(String),

    #[error("token budgeter: {0}")]
    Budget(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
