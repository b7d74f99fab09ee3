use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {message}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error(
        "byte-length mismatch: manifest declares {n_rows}x{n_cols} f32 ({expected} bytes) but blob has {actual} bytes"
    )]
    ByteLength {
        n_rows: usize,
        n_cols: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate record id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },

    #[error("record count {records} does not match embedding rows {rows}")]
    RecordCount { records: usize, rows: usize },

    #[error("invalid record at row {row}: {message}")]
    InvalidRecord { row: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weights schema violation at layer {layer}: {message}")]
    LayerShape { layer: usize, message: String },

    #[error("zero vector under cosine distance between points {pair:?} at segment {segment}")]
    ZeroVector { pair: (usize, usize), segment: usize },

    #[error("classifier transport failure at {endpoint} (batch {batch}): {message}")]
    Transport {
        endpoint: String,
        batch: usize,
        message: String,
    },

    #[error("classifier failed while evaluating pair {pair:?}: {source}")]
    Pair {
        pair: (usize, usize),
        #[source]
        source: Box<Error>,
    },

    #[error("classifier failed while evaluating grid cell {cell}: {source}")]
    Cell {
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("lambda {lambda} failed: {source}")]
    Sweep {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error once stage, pair, cell and sweep wrappers are peeled.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. }
            | Error::Pair { source, .. }
            | Error::Cell { source, .. }
            | Error::Sweep { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self.root(), Error::Transport { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io { .. })
    }
}
