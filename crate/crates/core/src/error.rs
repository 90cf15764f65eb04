use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown format {0:?}")]
    UnknownFormat(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate keyword surface {0:?}")]
    DuplicateKeyword(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("token {0:?} is not in the backend vocabulary")]
    OutOfVocabulary(String),

    #[error("base model unavailable: {0}")]
    BaseModelUnavailable(String),

    #[error(
        "model needs ~{required_mb} MiB but the budget is {budget_mb} MiB; \
         reduce the corpus (vocabulary of {vocab} tokens) or raise min_count"
    )]
    OutOfMemory {
        required_mb: u64,
        budget_mb: u64,
        vocab: usize,
    },

    #[error("no informative contexts; lower t or check keywords")]
    NoInformativeContexts,

    #[error("no masked sentences: none of the keywords occur in the corpus")]
    NoKeywordOccurrences,

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("training data has a single class; need at least two")]
    SingleClass,

    #[error("word {0:?} does not occur in the corpus")]
    WordAbsent(String),

    #[error("ground truth is empty")]
    EmptyTruth,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("run directory {0} is locked by another writer")]
    RunLocked(PathBuf),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
