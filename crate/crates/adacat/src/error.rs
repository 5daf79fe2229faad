use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdaCatError {
    #[error("invalid simplex: {0}")]
    InvalidSimplex(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bin width {width:.3e} below floor {floor:.3e} at index {index}")]
    WidthFloor { index: usize, width: f64, floor: f64 },
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("constant column {0} (range 0) cannot be scaled")]
    ConstantColumn(usize),
    #[error("non-finite loss at sample {sample}, dimension {dim}")]
    NonFiniteLoss { sample: usize, dim: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AdaCatError>;
