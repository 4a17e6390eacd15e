use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the nowcasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range for capacity {capacity}")]
    Bounds { index: usize, capacity: usize },

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("aggregation error at patch ({row}, {col}): {msg}")]
    Aggregation { row: usize, col: usize, msg: String },

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("sampling diverged at diffusion step {step}")]
    SamplingDivergence { step: usize },

    #[error("gradient check failed for `{param}`[{coord}]: analytic {analytic:e}, numeric {numeric:e}, rel err {rel_err:e}")]
    GradCheck {
        param: String,
        coord: usize,
        analytic: f64,
        numeric: f64,
        rel_err: f64,
    },

    #[error("non-finite value produced by `{0}`")]
    NonFinite(&'static str),

    #[error("evaluation error: missing files {0:?}")]
    Evaluation(Vec<String>),

    #[error("render error: {0}")]
    Render(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 1 for bad input or configuration, 2 for internal invariant failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Aggregation { .. } | Error::GradCheck { .. } | Error::NonFinite(_) | Error::Bounds { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
