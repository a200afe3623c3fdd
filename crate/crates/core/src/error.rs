use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate review id `{0}`")]
    DuplicateReviewId(String),

    #[error("review `{id}` has negative timestamp {timestamp}")]
    NegativeTimestamp { id: String, timestamp: i64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty observation sequence")]
    EmptySequence,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no labeled nodes to evaluate clustering quality")]
    InsufficientLabels,

    #[error("modularity is undefined for a graph with zero total weight")]
    UndefinedModularity,

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("correlation undefined: {0}")]
    CorrelationUndefined(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than I/O.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
