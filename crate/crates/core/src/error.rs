use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("uncontrollable correction for agent {agent}: |a_i| = {norm:e} with required correction {delta:e}")]
    Uncontrollable { agent: usize, norm: f64, delta: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation fault at t = {t}: {reason}")]
    Simulation { t: f64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error comes from user-provided configuration rather than
    /// a failure while simulating.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParameter(_) | Error::OutOfRange(_) | Error::Empty(_)
        )
    }
}
