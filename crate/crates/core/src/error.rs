use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum GmtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("point lies outside the sampled grid hull: {0}")]
    Extrapolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("internal solver error: {0}")]
    Solver(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GmtError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GmtError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GmtError::InvalidInput(format!(
            "{what} has non-finite coordinates"
        )))
    }
}

pub(crate) fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(GmtError::InvalidInput(format!(
            "radius must be positive and finite, got {r}"
        )))
    }
}
