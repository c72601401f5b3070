use thiserror::Error;

/// Errors raised by the diffusion engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("infeasible schedule at t={t}: {reason}")]
    Schedule { t: usize, reason: String },

    #[error("unreachable state at t={t}: {detail}")]
    Unreachable { t: usize, detail: String },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("training diverged at epoch {epoch}: loss={loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
