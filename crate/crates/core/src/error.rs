use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("solution exploded at t = {time} (life time reached)")]
    Explosion { time: f64 },

    #[error("QQ* is singular at t = {time} (smallest singular value {sigma_min:e}); the diffusion must be invertible along the path")]
    SingularDiffusion { time: f64, sigma_min: f64 },

    #[error("resolvent iteration is not contractive at λ = {lambda} (factor {factor:.4}): λ below threshold, increase λ")]
    NotContractive { lambda: f64, factor: f64 },

    #[error("no λ in the grid satisfies the certification bounds: {0}")]
    ThresholdNotMet(String),

    #[error("inverse of θ did not converge after {iterations} iterations (residual {residual:e}); field is not certified")]
    InversionFailed { iterations: usize, residual: f64 },

    #[error("report aggregation rejected: config hash {found} does not match {expected}")]
    HashMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}
