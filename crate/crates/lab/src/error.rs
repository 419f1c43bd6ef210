use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid cluster spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("embedding of point {index} has zero norm; cosine similarity undefined")]
    ZeroNormEmbedding { index: usize },

    #[error("degenerate similarity configuration: {0}")]
    DegenerateConfig(String),

    #[error("perturbation mode not enumerable: {0}")]
    NonEnumerablePerturbation(String),

    #[error("geometric infeasibility: {0}")]
    Infeasible(String),

    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
