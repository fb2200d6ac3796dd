use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("input too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("silent signal: {0}")]
    Silent(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("unsupported audio: {0}")]
    Audio(String),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] bcdm_nn::NnError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
