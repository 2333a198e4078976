use std::path::PathBuf;

/// Errors produced by the assessment pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid signal `{id}`: {reason}")]
    InvalidSignal { id: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature `{0}` is not a column of the input")]
    MissingFeature(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("symbol {symbol} out of range for an alphabet of {alphabet} symbols")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("requested {requested} components but only {available} positive eigenvalues exist (achievable d: 1..={available})")]
    TooManyComponents { requested: usize, available: usize },

    #[error("no feature dimension was retained by the selection rule")]
    EmptySelection,

    #[error("latent-state mining removed every sample (survivors per step: {survivors:?})")]
    MiningExhausted { survivors: Vec<usize> },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data rather than configuration or
    /// an internal stage failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSignal { .. }
                | Error::DimensionMismatch { .. }
                | Error::MissingFeature(_)
                | Error::Empty(_)
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::Csv { .. }
                | Error::Format { .. }
                | Error::SymbolOutOfRange { .. }
        )
    }
}
