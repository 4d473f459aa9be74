//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The equality-constraint target is at or beyond its supremum `C * m_p`.
    #[error("infeasible lambda {lambda}: must satisfy 0 <= lambda < C * m_p = {limit}")]
    InfeasibleLambda { lambda: f64, limit: f64 },

    /// No bias value satisfies the KKT inequalities; the solver did not converge.
    #[error("degenerate bias: feasible interval [{lower}, {upper}] is empty beyond tolerance")]
    DegenerateBias { lower: f64, upper: f64 },

    /// No lambda in [start, 1) produced a negative bias term.
    #[error("lambda escalation failed: bias still {bias} at lambda_frac {lambda_frac}")]
    EscalationFailed { bias: f64, lambda_frac: f64 },

    /// A class has too few samples to split into fit and validation parts.
    #[error("class {label} has {count} samples; at least 2 needed for a stratified split")]
    ClassTooSmall { label: i32, count: usize },

    /// Every grid point was vetoed by the non-negative-bias rule.
    #[error("grid search rejected every candidate (all biases non-negative)")]
    AllRejected,

    /// The requested regime cannot be run on this class count.
    #[error("{0}")]
    InsufficientClasses(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The dataset does not have enough classes to hold some out as unknown.
    #[error("need more than {n_acs} classes to build an open split, found {available}")]
    NotEnoughClasses { n_acs: usize, available: usize },

    #[error("confusion matrix has no known-class test samples")]
    NoKnownSamples,

    #[error("confusion matrix has no unknown-class test samples")]
    NoUnknownSamples,

    #[error("all paired differences are zero; signed-rank test undefined")]
    AllZeroDifferences,

    #[error("model expects 2-dimensional inputs, got feature index {index}")]
    DimensionMismatch { index: u32 },

    /// Training of one binary classifier failed; annotated with the positive class.
    #[error("training class {label} failed: {source}")]
    ClassTraining {
        label: i32,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A protocol step failed; carries the (n_acs, trial) context.
    #[error("{context}: {source}")]
    Experiment {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
