use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("activation cache does not belong to this network: {0}")]
    CacheMismatch(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("window pair at position {0} has no target")]
    MissingTarget(usize),

    #[error("invalid window geometry: {0}")]
    InvalidWindow(String),

    #[error("series of length {len} is shorter than the output window ({l_out})")]
    SeriesTooShort { len: usize, l_out: usize },

    #[error("no window covers index {index}")]
    CoverageGap { index: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}: timestamps not strictly increasing at line {line} ({prev} then {next})")]
    NonMonotonic {
        path: String,
        line: usize,
        prev: i64,
        next: i64,
    },

    #[error("{0}: no samples")]
    EmptySeries(String),

    #[error("channels have no common time range")]
    EmptyIntersection,

    #[error("channels are not on a shared grid: {0}")]
    Misaligned(String),

    #[error("cannot rebalance: {0}")]
    Rebalance(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: String, expected: u32 },

    #[error("checkpoint header is malformed: {0}")]
    CheckpointHeader(String),

    #[error("checkpoint has a header but no parameter payload")]
    CheckpointPayloadMissing,

    #[error("checkpoint payload is {found} bytes but the config requires {expected}")]
    CheckpointSize { expected: usize, found: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
