use score_core::ScoreError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;
pub const EXIT_IO: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Score(#[from] ScoreError),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(String),

    #[error("gradient check failed for {0}")]
    GradCheckFailed(String),

    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Score(e) => score_exit_code(e),
            CliError::Usage(_) => EXIT_INPUT,
            CliError::Io(_) => EXIT_IO,
            CliError::GradCheckFailed(_) => EXIT_GRADCHECK,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

pub fn score_exit_code(e: &ScoreError) -> i32 {
    use ScoreError::*;
    match e {
        Io(_) => EXIT_IO,
        ZeroVector { .. }
        | NotPositiveDefinite { .. }
        | EmptyGroundSet
        | SingleClassBatch
        | DegenerateBatch { .. }
        | MissingClass { .. }
        | DivergedLoss { .. } => EXIT_PRECONDITION,
        NonPositiveBandwidth(_)
        | InvalidBatch(_)
        | InvalidPartition(_)
        | LambdaBelowOne(_)
        | NonPositiveLambda(_)
        | NegativeMargin(_)
        | GroundSetTooLarge { .. }
        | BadK(_)
        | EmptyClass { .. }
        | InvalidParameter(_)
        | Parse { .. } => EXIT_INPUT,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
