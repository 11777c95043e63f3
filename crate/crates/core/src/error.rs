//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("streamline needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("non-finite coordinate at point {point} of streamline {id}")]
    NonFiniteCoordinate { id: u64, point: usize },

    #[error("streamline {id} has zero arc length")]
    ZeroArcLength { id: u64 },

    #[error("duplicate streamline id {0}")]
    DuplicateId(u64),

    #[error("point count mismatch: {left} vs {right}")]
    PointCountMismatch { left: usize, right: usize },

    #[error("empty tractogram")]
    EmptyTractogram,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query {index} failed: {source}")]
    QueryFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("label list has {labels} entries for {streamlines} streamlines")]
    LabelCountMismatch { labels: usize, streamlines: usize },

    #[error("bundle labels are not dense from 0: missing label {0}")]
    SparseLabels(u32),

    #[error("invalid count: c={c} exceeds n={n}")]
    CountExceedsTotal { c: u64, n: u64 },

    #[error("total seed count must be positive")]
    ZeroSeedCount,

    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    ParseLine { line: usize, message: String },

    #[error("unsupported header: {0}")]
    UnsupportedHeader(String),

    #[error("snapshot corrupt: {0}")]
    SnapshotCorrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::ParseLine {
            line,
            message: message.into(),
        }
    }
}
