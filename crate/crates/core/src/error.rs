//! Error type shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty library: column {column} sums to zero")]
    EmptyLibrary { column: usize },

    #[error("nonpositive length for gene {gene}")]
    NonPositiveLength { gene: String },

    #[error("nonpositive value under log at gene {gene}, sample {sample}")]
    NonPositiveUnderLog { gene: String, sample: usize },

    #[error("unit {unit} requires gene lengths but none were provided")]
    MissingLengths { unit: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot estimate within-group variance: group {group} has {size} sample(s), need at least 2")]
    GroupTooSmall { group: usize, size: usize },

    #[error("need at least {needed} genes, got {got}")]
    TooFewGenes { needed: usize, got: usize },

    #[error("no residual degrees of freedom: n = {n} must exceed the number of groups S = {s}")]
    NoResidualDf { n: usize, s: usize },

    #[error("invalid quantile input: {0}")]
    InvalidQuantile(String),

    #[error("exhaustive search only supported for low-dimensional cases (S = 2 or 3), got S = {s}")]
    UnsupportedGroupCount { s: usize },

    #[error("labels contain a single class; need at least one positive and one negative")]
    SingleClassLabels,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("replicate with seed {seed} failed: {source}")]
    ReplicateFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
