use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no token survived vocabulary filtering")]
    EmptyCorpus,
    #[error("time axis must contain at least one bin")]
    NoBins,
    #[error("corpus is already tf-idf normalized")]
    AlreadyNormalized,
    #[error("unknown feed `{0}`")]
    UnknownFeed(String),
    #[error("pooling requires at least 2 feeds, found {0}")]
    NotEnoughFeeds(usize),
    #[error("duplicate feed id `{0}`")]
    DuplicateFeed(String),
    #[error("series of length {len} is too short for {n_lags} lags")]
    SeriesTooShort { len: usize, n_lags: usize },
    #[error("number of lags must be at least 1")]
    ZeroLags,
    #[error("kernel needs at least 2 samples, found {0}")]
    TooFewSamples(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("regularizer {kappa:e} is below the floor {floor:e}; right-hand side is singular")]
    SingularRhs { kappa: f64, floor: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("primal weights are only defined for linear kernels (model kernel: {0})")]
    NonLinearKernel(String),
    #[error("time axis of length {len} is too short for {n_folds} folds with {n_lags} lags")]
    TooShortForFolds { len: usize, n_folds: usize, n_lags: usize },
    #[error("projection has zero variance")]
    DegenerateProjection,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feed `{feed}`, fold {fold}: {source}")]
    InFold {
        feed: String,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: format error: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: unsupported format version (expected {expected}, found {found})")]
    FormatVersion { path: PathBuf, expected: u32, found: u32 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
