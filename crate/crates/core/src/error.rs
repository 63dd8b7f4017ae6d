use num_bigint::BigInt;
use thiserror::Error;

/// Errors shared across the construction, dynamics and analysis layers.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("cut policy cannot produce a valid cut count (>= 2) for stage {stage}")]
    PolicyUndefined { stage: u32 },

    #[error("spacer policy does not supply exactly r_j nonnegative values for stage {stage}")]
    SpacerMismatch { stage: u32 },

    #[error("column {column} out of range [1, {r}] at stage {stage}")]
    ColumnOutOfRange { stage: u32, column: BigInt, r: BigInt },

    #[error("level {level} out of range [0, {h}] at stage {stage}")]
    LevelOutOfRange { stage: u32, level: BigInt, h: BigInt },

    #[error("stage {needed} is not built (table depth {depth})")]
    StageMissing { needed: u32, depth: u32 },

    #[error("cannot extend table to stage {stage}")]
    CannotExtend {
        stage: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("normalization reference must be positive and at least the measure of every set involved")]
    BadReference,

    #[error("oracle depth insufficient: shift {m} exceeds h_K = {h}")]
    DepthInsufficient { m: BigInt, h: BigInt },

    #[error("refusing to materialize more than {limit} cells (needed {needed})")]
    CellLimit { limit: u64, needed: u64 },

    #[error("invalid parameter: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stage the caller must build before retrying, when the failure is depth.
    pub fn missing_stage(&self) -> Option<u32> {
        match self {
            Error::StageMissing { needed, .. } => Some(*needed),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
