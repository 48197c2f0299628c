use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Model(#[from] gradraker::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Setup(String),
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;

pub fn io_err(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.as_ref().display().to_string();
    move |source| BenchError::Io { path, source }
}
