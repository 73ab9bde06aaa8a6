use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("band count mismatch: operator expects {expected} bands, image has {found}")]
    BandMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel of size {kernel_rows}x{kernel_cols} does not fit a {rows}x{cols} image")]
    KernelTooLarge {
        kernel_rows: usize,
        kernel_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("image of size {rows}x{cols} is not divisible by decimation factors {row_factor}x{col_factor}")]
    NotDivisible {
        rows: usize,
        cols: usize,
        row_factor: usize,
        col_factor: usize,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("solver failed at outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing sidecar header {}", .0.display())]
    MissingHeader(PathBuf),

    #[error("missing payload {}", .0.display())]
    MissingPayload(PathBuf),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("unsupported dtype {0:?}, only \"f32\" is supported")]
    UnknownDtype(String),

    #[error("unsupported layout {0:?}, only \"band-sequential\" is supported")]
    UnknownLayout(String),

    #[error("malformed header {}: {message}", path.display())]
    Header { path: PathBuf, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed: {0}")]
    Encode(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
