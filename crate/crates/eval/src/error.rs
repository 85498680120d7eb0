use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("log-prob provider: {0}")]
    Provider(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Model(#[from] ropelab_toy::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
