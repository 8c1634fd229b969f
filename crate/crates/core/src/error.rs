use thiserror::Error;

use crate::policy::TokenSequence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Decoding reached the length cap before emitting EOS.
    #[error("decoding reached {max_len} tokens without EOS")]
    Truncated {
        partial: TokenSequence,
        max_len: usize,
    },

    #[error("cannot parse {fragment:?}: {reason}")]
    Parse { fragment: String, reason: String },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    /// Candidate generation failed; carries the set built so far.
    #[error("candidate generation aborted: {reason}")]
    GenerationAborted {
        partial: Box<crate::conformal::CandidateSet>,
        reason: String,
    },

    #[error("abduction failed: {0}")]
    Abduction(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(fragment: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            fragment: fragment.into(),
            reason: reason.into(),
        }
    }
}
