use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter is outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested rotational transition is not allowed by the selection rule
    /// or by the level range of the model.
    #[error("forbidden transition: {0}")]
    ForbiddenTransition(String),

    /// A comb detuning or sideband request is outside the representable range.
    #[error("invalid detuning: {0}")]
    InvalidDetuning(String),

    /// An apparatus operation was requested in an order the hardware cannot
    /// perform (for example a sideband transfer while the atom is shelved).
    #[error("protocol sequence error: {0}")]
    ProtocolSequence(String),

    /// A fit could not be performed or did not converge.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// A measurement procedure ran to completion without determining the
    /// quantity it was asked for (for example, comb-order inference lost the
    /// line while dithering).
    #[error("undetermined: {0}")]
    Undetermined(String),

    /// Configuration file is missing, malformed, or fails schema validation.
    #[error("config error: {0}")]
    Config(String),

    /// Replay of a recorded run diverged from the recorded outputs.
    #[error("replay divergence: {0}")]
    ReplayDivergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code associated with this error kind.
    ///
    /// 0 success, 2 config error, 3 partial results, 4 replay divergence.
    /// Everything else maps to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::ReplayDivergence(_) => 4,
            _ => 1,
        }
    }
}
