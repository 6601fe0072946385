use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("invalid trajectory: {0}")]
    Trajectory(String),

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NonHermitian { asymmetry: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("malformed conic program: {0}")]
    Program(String),

    #[error("beamforming infeasible at slots {slots:?}")]
    SlotInfeasible { slots: Vec<usize> },

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("analytic gradient disagrees with finite differences: {0}")]
    GradientMismatch(String),

    #[error("invalid experiment manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
