use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("unsatisfiable difficulty: {0}")]
    UnsatisfiableDifficulty(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Malformed training or evaluation data; `index` names the offending item.
    #[error("data error at item {index}: {message}")]
    Data { index: usize, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("method unavailable: {0}")]
    MethodUnavailable(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn data(index: usize, message: impl Into<String>) -> Self {
        Error::Data {
            index,
            message: message.into(),
        }
    }
}
