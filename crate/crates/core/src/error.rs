use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = KpaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KpaError {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("replay failed at t={t}: {reason}")]
    Replay { t: u64, reason: String },

    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("changepoint: {0}")]
    Changepoint(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("node {0} has no group label")]
    Unlabeled(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KpaError {
    /// Stable, machine-parsable identifier used as the CLI error prefix.
    pub fn code(&self) -> &'static str {
        match self {
            KpaError::InvalidParams(_) => "E_PARAMS",
            KpaError::Config(_) => "E_CONFIG",
            KpaError::Domain(_) => "E_DOMAIN",
            KpaError::Replay { .. } => "E_REPLAY",
            KpaError::Singular(_) => "E_SINGULAR",
            KpaError::Estimation(_) => "E_ESTIMATION",
            KpaError::Changepoint(_) => "E_CHANGEPOINT",
            KpaError::Parse { .. } => "E_PARSE",
            KpaError::Unlabeled(_) => "E_UNLABELED",
            KpaError::Internal(_) => "E_INTERNAL",
            KpaError::Io(_) => "E_IO",
            KpaError::Json(_) => "E_JSON",
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
