use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters for {family}: {reason}")]
    InvalidParameter { family: &'static str, reason: String },

    #[error("value {value} is outside the support of {family}")]
    OutOfSupport { family: &'static str, value: String },

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support truncation did not reach cumulative mass {target} after {terms} terms")]
    TruncationFailed { target: f64, terms: usize },

    #[error("family mismatch: expected {expected}, got {got}")]
    FamilyMismatch { expected: &'static str, got: &'static str },

    #[error("training-fold information mismatch: {p1} vs {p2}")]
    CalibrationMismatch { p1: f64, p2: f64 },

    #[error("complete separation detected (max |coef| = {max_abs_coef:.3})")]
    Separation { max_abs_coef: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("cross-validation fold {fold} has a single-class response")]
    SingleClassFold { fold: usize },

    #[error("study aborted: {failed} of {total} replicates failed (budget {budget})")]
    StudyAborted { failed: usize, total: usize, budget: usize },

    #[error("inconsistent report: {0}")]
    InconsistentReport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
