use thiserror::Error;

use crate::losses::Objective;

pub type Result<T> = std::result::Result<T, ScoreError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("embedding {index} has norm below 1e-12; cosine similarity is undefined")]
    ZeroVector { index: usize },

    #[error("RBF bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid class partition: {0}")]
    InvalidPartition(String),

    #[error("matrix of size {size} is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { size: usize, pivot: usize, value: f64 },

    #[error("ground set is empty")]
    EmptyGroundSet,

    #[error(
        "graph-cut requires lambda >= 1 for submodularity, got {0} \
         (the lambda ablation grid includes 0.5, which violates this bound)"
    )]
    LambdaBelowOne(f64),

    #[error("log-determinant requires lambda > 0, got {0}")]
    NonPositiveLambda(f64),

    #[error("triplet margin must be nonnegative, got {0}")]
    NegativeMargin(f64),

    #[error("batch contains a single class; every complement V \\ A_k is empty")]
    SingleClassBatch,

    #[error("{objective} cannot be evaluated on this batch: {reason}")]
    DegenerateBatch { objective: Objective, reason: String },

    #[error("ground set of size {n} exceeds the enumeration bound {max}")]
    GroundSetTooLarge { n: usize, max: usize },

    #[error("K must be in 0..=7, got {0}")]
    BadK(usize),

    #[error("class {class} would receive zero samples")]
    EmptyClass { class: usize },

    #[error("class {class} has no training samples")]
    MissingClass { class: usize },

    #[error("loss became non-finite at step {step}")]
    DivergedLoss { step: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ScoreError {
    fn from(e: std::io::Error) -> Self {
        ScoreError::Io(e.to_string())
    }
}
