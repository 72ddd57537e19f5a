use thiserror::Error;

/// Errors raised while building or validating planning problems.
///
/// Planning failures (a solve that does not converge) are results, not errors;
/// everything here is structural and aborts the current operation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid contact surface: {0}")]
    InvalidSurface(String),
    #[error("surface index {index} out of range ({count} surfaces)")]
    MissingSurface { index: usize, count: usize },
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("unsupported expression: {0}")]
    UnsupportedExpression(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, PlanError>;

impl From<std::io::Error> for PlanError {
    fn from(e: std::io::Error) -> Self {
        PlanError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for PlanError {
    fn from(e: serde_json::Error) -> Self {
        PlanError::Parse(e.to_string())
    }
}
