use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error("no positive training sequences for action unit {0}")]
    NoPositives(u16),
    #[error("empty test split")]
    EmptyTestSplit,
    #[error(transparent)]
    Core(#[from] mbda_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
