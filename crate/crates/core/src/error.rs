use thiserror::Error;

/// Errors produced by transcription, the Schur-step backends and the driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in `{callable}`: expected {expected}, got {got}")]
    Dimension {
        callable: String,
        expected: usize,
        got: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} is not positive definite ({detail})")]
    Singular { what: &'static str, detail: String },

    #[error("singular value {sigma:.6e} lies outside the admissible interval [{lower:.6e}, 1]")]
    SpectrumViolation { sigma: f64, lower: f64 },

    #[error("accuracy {eps_prime:e} at kappa {kappa} needs degree {degree}, above the cap {cap}")]
    InfeasibleAccuracy {
        kappa: f64,
        eps_prime: f64,
        degree: usize,
        cap: usize,
    },

    #[error("invalid block-encoding normalization {0}")]
    InvalidNormalization(f64),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
