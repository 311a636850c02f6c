use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation interval has no probability mass: {0}")]
    DegenerateTruncation(String),

    #[error("truncation set is empty: lower bound {lower} exceeds upper bound {upper}")]
    EmptyTruncation { lower: f64, upper: f64 },

    #[error("non-finite function value {value} at {at}")]
    NonFiniteEvaluation { at: f64, value: f64 },

    #[error("predictor of interest is identically zero")]
    DegeneratePredictor,

    #[error("lasso did not converge: duality gap {gap:e} after {sweeps} sweeps")]
    NoConvergence { gap: f64, sweeps: usize },

    #[error("gram matrix is numerically singular (condition number {condition:e})")]
    SingularGram { condition: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model universe over {p} controls exceeds the cap of {cap}")]
    UniverseTooLarge { p: usize, cap: usize },

    #[error("gamma must lie in [0, alpha]; got gamma={gamma}, alpha={alpha}")]
    InvalidGamma { gamma: f64, alpha: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
