use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum PptError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),

    #[error("numerical conditioning failure: {0}")]
    NumericalConditioning(String),

    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("simulation diverged at t = {t:.3} s")]
    SimulationDiverged { t: f64 },

    #[error("infeasible geometry after {attempts} attempts")]
    InfeasibleGeometry { attempts: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PptError>;
