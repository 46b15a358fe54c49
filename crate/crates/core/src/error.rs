use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration file or table could not be loaded or is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a precondition.
    #[error("data error: {0}")]
    Data(String),

    /// The corpus document is not valid JSON.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unmapped tag: {0}")]
    UnmappedTag(String),

    #[error("missing key: {0}")]
    MissingKey(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("undefined AUC: targets contain a single class")]
    UndefinedAuc,

    #[error("leakage: {0} test conversation(s) also appear in the training manifest")]
    Leakage(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration problems are distinguished from data problems by the CLI
    /// exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnmappedTag(_))
    }
}
