use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by every layer of the pipeline.
///
/// Variants are grouped by [`ErrorKind`], which the command-line front end
/// maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("contract error: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("client {site} failed: {source}")]
    Client { site: String, source: Box<Error> },

    #[error("recording {recording}: {source}")]
    Recording { recording: String, source: Box<Error> },

    #[error("repetition {repetition}, fold {fold}, {scope}: {source}")]
    Job {
        repetition: usize,
        fold: usize,
        scope: String,
        source: Box<Error>,
    },

    #[error(transparent)]
    Corpus(#[from] CorpusError),

    #[error("import error at row {row}: {kind}")]
    Import { row: usize, kind: ImportError },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Binary corpus file failures.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("non-finite value in record {record}")]
    NonFinite { record: usize },
    #[error("invalid record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
    #[error("{0} trailing bytes after the declared records")]
    TrailingBytes(usize),
}

/// Feature-table import failures.
#[derive(Debug, Error)]
pub enum ImportError {
    #[error("expected {expected} feature values, found {found}")]
    Width { expected: usize, found: usize },
    #[error("label must be 0 or 1, found {0:?}")]
    Label(String),
    #[error("duplicate subject {subject} at site {site}")]
    Duplicate { subject: String, site: String },
    #[error("unparseable value {0:?}")]
    Value(String),
    #[error("missing header row")]
    Header,
    #[error("{0}")]
    Csv(String),
}

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Runtime => 3,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Data(_) | Error::Corpus(_) | Error::Import { .. } | Error::Io { .. } => {
                ErrorKind::Data
            }
            Error::Recording { source, .. } => source.kind(),
            Error::Shape { .. }
            | Error::Contract(_)
            | Error::Training(_)
            | Error::Protocol(_)
            | Error::Client { .. }
            | Error::Job { .. } => ErrorKind::Runtime,
        }
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
