use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {index} lies behind the camera (z = {z})")]
    BehindCamera { index: usize, z: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frame mismatch: {0:?} vs {1:?}")]
    FrameMismatch(crate::body_model::Frame, crate::body_model::Frame),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("no applicable loss term for the given observation")]
    NoApplicableTerm,

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("person out of frustum after {0} attempts")]
    OutOfFrustum(usize),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by invalid user input rather than the filesystem.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Json { .. })
    }
}
