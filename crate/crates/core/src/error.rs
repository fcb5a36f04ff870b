use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("data has zero variance")]
    ZeroVariance,

    #[error("solver did not converge after {iterations} iterations (KKT violation {violation:.3e})")]
    NonConvergence { iterations: usize, violation: f64 },

    #[error("{}", match .index {
        Some(i) => alloc::format!("record {i}: {}", .reason),
        None => alloc::format!("{}", .reason),
    })]
    Validation { index: Option<usize>, reason: String },

    #[error("unknown category {category:?} in task {task:?}")]
    UnknownCategory { task: String, category: String },

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("split impossible: {0}")]
    SplitImpossible(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn validation(index: Option<usize>, reason: impl Into<String>) -> Self {
        Error::Validation {
            index,
            reason: reason.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimMismatch { expected, actual })
        }
    }
}
