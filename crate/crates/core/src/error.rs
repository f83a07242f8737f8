use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {reason}")]
    Row { path: PathBuf, row: usize, reason: String },

    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("series {asset} has {series_len} samples, {needed} required")]
    TooShort { asset: String, series_len: usize, needed: usize },

    #[error("no common time window across the supplied series")]
    EmptyOverlap,

    #[error("asset {asset}: gap from {from_ms} ms to {to_ms} ms exceeds max fill of {max_fill} intervals")]
    GapTooLong { asset: String, from_ms: i64, to_ms: i64, max_fill: usize },

    #[error("unknown asset {0}")]
    UnknownAsset(String),

    #[error("all {0} segments excluded below the zero floor")]
    AllSegmentsExcluded(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("output {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
