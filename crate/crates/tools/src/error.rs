use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, ToolError>;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic number: expected {expected}, found {found:#010x}")]
    BadMagic { expected: &'static str, found: u32 },

    #[error("file is truncated: {0}")]
    TruncatedFile(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("run with lambda = {lambda} collapsed every t-product layer to zero by epoch {epoch}")]
    DegenerateRun { lambda: f64, epoch: usize },

    #[error(transparent)]
    Core(#[from] tnn_core::Error),
}

impl ToolError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ToolError::Io { path: path.into(), source }
    }
}
