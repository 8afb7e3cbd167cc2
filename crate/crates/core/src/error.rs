use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate occurrence {key}")]
    DuplicateOccurrence { key: String },

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unknown lemma {0:?}")]
    UnknownLemma(String),

    #[error("no vector stored for occurrence {0:?}")]
    MissingVector(String),

    #[error("occurrence {0:?} has no gold annotation")]
    MissingAnnotation(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("bad magic {found:?}, expected \"CIEM\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported store format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("store declares dim = 0")]
    ZeroDim,

    #[error("store truncated: expected {expected} records, read {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("corrupt store: {0}")]
    Corrupt(String),

    #[error("invalid vector for {id:?}: {reason}")]
    InvalidVector { id: String, reason: String },

    #[error("write failed after {position} bytes: {source}")]
    Write { position: u64, source: io::Error },

    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateOccurrence { .. } => "duplicate_occurrence",
            Error::EmptyCorpus => "empty_corpus",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::UnknownLemma(_) => "unknown_lemma",
            Error::MissingVector(_) => "missing_vector",
            Error::MissingAnnotation(_) => "missing_annotation",
            Error::Consistency(_) => "consistency",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::ZeroDim => "zero_dim",
            Error::Truncated { .. } => "truncated",
            Error::Corrupt(_) => "corrupt",
            Error::InvalidVector { .. } => "invalid_vector",
            Error::Write { .. } => "write",
            Error::Json { .. } => "json",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
