use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Tape(#[from] dslad::Error),

    #[error("time step {dt} violates the stability limit {limit}")]
    Stability { dt: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("finite difference produced a non-finite value at input {input}, element {element}")]
    NonFinite { input: usize, element: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
