use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} {requested} is not resolvable on this grid (maximum admissible is {max})")]
    Resolution {
        what: &'static str,
        requested: usize,
        max: usize,
    },

    #[error("grid mismatch: {left} points vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "time step {dt:e} violates the advective restriction; admissible dt <= {admissible:e}"
    )]
    StepSize { dt: f64, admissible: f64 },

    #[error("solution diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("planner infeasible: bound {bound} diverges ({detail})")]
    Infeasible { bound: String, detail: String },

    #[error("prescribed rate xi = {xi} must exceed lambda_1*nu/2 = {min}")]
    RateTooSmall { xi: f64, min: f64 },

    #[error("insufficient data for a rate fit: {available} usable samples, need {needed}")]
    InsufficientData { needed: usize, available: usize },

    #[error("non-positive or non-finite value {value} at t = {t} before the noise floor")]
    Domain { t: f64, value: f64 },

    #[error("theorem for claim `{claim}` does not apply; unmet conditions: {}", failed.join(", "))]
    Precondition { claim: String, failed: Vec<String> },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
