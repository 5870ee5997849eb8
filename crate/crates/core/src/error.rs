use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("simulation state became non-finite ({0})")]
    NonFiniteState(&'static str),

    #[error("muscle Jacobian is rank deficient (smallest singular value {0:.3e})")]
    RankDeficient(f64),

    #[error("non-finite loss during PPO update (offending batch dumped to {dump:?})")]
    NonFiniteLoss { dump: Option<PathBuf> },

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
