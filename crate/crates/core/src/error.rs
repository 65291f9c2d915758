use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("correlation {0} outside the admissible range (-1, 1)")]
    RhoOutOfRange(f64),

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("inverted integration limits: lower {lower} is not below upper {upper}")]
    InvertedLimits { lower: f64, upper: f64 },

    #[error("invalid model dimensions: {0}")]
    InvalidDims(String),

    #[error("pair ({r}, {s}) is not a valid margin pair for q = {q} (need r < s < q)")]
    InvalidPair { r: usize, s: usize, q: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Indices in error variants are 0-based; messages print them 1-based.
    #[error("thresholds of margin {} are not strictly increasing", .margin + 1)]
    UnorderedThresholds { margin: usize },

    #[error("non-finite parameter value at position {0}")]
    NonFinite(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {} has {got} columns, expected {expected}", .row + 1)]
    RaggedRow { row: usize, got: usize, expected: usize },

    #[error("row {}, column {}: category {value} outside 1..={k}", .row + 1, .col + 1)]
    CategoryOutOfRange {
        row: usize,
        col: usize,
        value: i64,
        k: usize,
    },

    #[error(
        "margin {}: category {category} never observed; threshold not identifiable from data",
        .margin + 1
    )]
    EmptyCategory { margin: usize, category: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not generate a positive definite sparse correlation matrix after {0} attempts")]
    CorrelationGeneration(usize),

    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),
}
