use thiserror::Error;

/// Errors raised by the conversion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid population distribution: {0}")]
    InvalidPopulation(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate scheme: {0}")]
    DegenerateScheme(String),

    #[error("outside the formula domain: {0}")]
    Domain(String),

    #[error("spectral aliasing: {fraction:.3e} of the spectral energy sits in the outer 10% of the grid")]
    Aliasing { fraction: f64 },

    #[error("time step too coarse: dt * max_rate = {ratio:.3} exceeds {limit}")]
    Stability { ratio: f64, limit: f64 },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("relative efficiency requires an original-channel companion run")]
    MissingCompanion,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
