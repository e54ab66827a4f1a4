use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("ragged rows: channel {channel} has {found} samples, expected {expected}")]
    RaggedRows {
        channel: String,
        found: usize,
        expected: usize,
    },
    #[error("non-finite value in channel {channel} at sample {index}")]
    NonFinite { channel: String, index: usize },
    #[error("duplicate name {0:?}")]
    Duplicate(String),
    #[error("coordinate out of range for {name}: ({x}, {y})")]
    CoordinateRange { name: String, x: f64, y: f64 },
    #[error("missing label for subject {subject:?} trial {trial:?}")]
    MissingLabel { subject: String, trial: String },
    #[error("bad container: {0}")]
    Container(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("signal too short: need {needed} samples, have {available}")]
    TooShort { needed: usize, available: usize },
    #[error("length {len} not divisible by {divisor}")]
    Length { len: usize, divisor: usize },
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("degenerate window: all band energies are zero")]
    DegenerateEnergies,
    #[error("pixel collision: {first} and {second} both map to ({row}, {col})")]
    PixelCollision {
        first: String,
        second: String,
        row: usize,
        col: usize,
    },
    #[error("channel {0:?} not in montage or value set")]
    UnknownChannel(String),
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("leakage detected: {0}")]
    Leakage(String),
    #[error("svm did not converge within {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },
    #[error("no nonzero pairs")]
    NoNonzeroPairs,
    #[error("fold plans differ between arms")]
    FoldMismatch,
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
