use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("entry count mismatch: header declares {declared}, found {found}")]
    EntryCountMismatch { declared: usize, found: usize },

    #[error("index out of range: ({row}, {col}) outside {rows}x{cols}")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("duplicate coordinate: ({row}, {col})")]
    DuplicateCoordinate { row: usize, col: usize },

    #[error("ragged row: line {line} has {found} fields, expected {expected}")]
    RaggedRow { line: usize, found: usize, expected: usize },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("invalid value {value} at ({gene}, {cell}): {reason}")]
    InvalidValue {
        gene: usize,
        cell: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("wrong layer: expected {expected}, found {found}")]
    WrongLayer {
        expected: &'static str,
        found: &'static str,
    },

    #[error("filter removed all {0}")]
    EmptyAfterFilter(&'static str),

    #[error("cell {0} has zero library size")]
    ZeroLibrarySize(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("optimization diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("missing id: {0}")]
    MissingId(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dataset {name}")]
    Dataset {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
