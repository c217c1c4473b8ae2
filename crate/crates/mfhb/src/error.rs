use thiserror::Error;

/// Errors surfaced by the bootstrap engine, the simulation models and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum MfhbError {
    #[error("eigensolver did not converge for a {dim}x{dim} matrix (condition indicator {condition:.3e})")]
    EigenFailure { dim: usize, condition: f64 },

    #[error("matrix numerically zero: all eigenvalues below threshold")]
    NumericallyZeroMatrix,

    #[error("degenerate first-stage covariance")]
    DegenerateFirstStage,

    #[error("unstable model: component exceeded {limit:.1e} at step {step}")]
    UnstableModel { step: usize, limit: f64 },

    #[error("bandwidth {bandwidth} outside ({lo:.6}, {hi:.6})")]
    BandwidthOutOfRange { bandwidth: f64, lo: f64, hi: f64 },

    #[error("block length {block} invalid for series length {n}")]
    InvalidBlockLength { block: usize, n: usize },

    #[error("lag {lag} out of range for series length {n}")]
    LagOutOfRange { lag: i64, n: usize },

    #[error("statistic undefined at the observed spectral means: {reason}")]
    StatisticUndefined { reason: String },

    #[error("too many skipped replicates: {skipped} of {total}")]
    TooManySkips { skipped: usize, total: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MfhbError>;
