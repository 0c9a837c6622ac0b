use std::path::PathBuf;

use crate::Sid;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series is empty")]
    EmptySeries,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("segment count {w} is invalid for series length {n} (need 1 <= w <= n and n % w == 0)")]
    InvalidSegments { w: usize, n: usize },

    #[error("warping window {window} must be smaller than the series length {n}")]
    WindowTooLarge { window: usize, n: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("node of size {size} does not exceed capacity {th}; no split needed")]
    NoSplitNeeded { size: u64, th: u64 },

    #[error("node cannot be split: every segment is at full cardinality")]
    Unsplittable,

    #[error("segment {0} is already at full cardinality")]
    SegmentSaturated(usize),

    #[error("sub-plan {sub:?} is not a subset of base plan {base:?}")]
    NotSubset { base: Vec<usize>, sub: Vec<usize> },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("malformed dataset {path}: {reason}")]
    MalformedDataset { path: PathBuf, reason: String },

    #[error("no routing entry for sid {sid:#b} at node {node}")]
    MissingRoute { node: u32, sid: Sid },

    #[error("bad magic number in {0}")]
    BadMagic(PathBuf),

    #[error("unsupported index format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("checksum mismatch in {path}: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum {
        path: PathBuf,
        stored: u64,
        computed: u64,
    },

    #[error("corrupt index: {0}")]
    Corrupt(String),

    #[error("{0} not found")]
    NotFound(String),

    #[error("k mismatch: results carry {results}, ground truth carries {truth}")]
    KMismatch { results: usize, truth: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
