use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transform has {transform} channels but tensor has {tensor}")]
    TransformChannelMismatch { transform: usize, tensor: usize },

    #[error("matrix is not orthogonal: ||M^T M - I||_F = {residual:e}")]
    NonOrthogonal { residual: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("operation undefined for the zero tensor")]
    ZeroTensor,

    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("adversarial risk {risk:e} with N = {n} is not below l(b_f)/N; margin undefined")]
    NotSeparated { risk: f64, n: usize },

    #[error("training diverged at epoch {epoch}: non-finite risk")]
    DivergenceDetected { epoch: usize },

    #[error("invalid inputs: {0}")]
    InvalidInputs(String),
}
