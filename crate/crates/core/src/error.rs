use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpiError>;

#[derive(Debug, Error)]
pub enum SpiError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("unknown builtin target '{0}' (expected one of: letters, bars, checker, flat)")]
    UnknownTarget(String),
    #[error("non-finite value at pixel {0}")]
    NonFinite(usize),
    #[error("{0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("region of interest {roi:?} does not fit inside a {side}x{side} grid")]
    RoiOutOfBounds {
        roi: (usize, usize, usize, usize),
        side: usize,
    },
    #[error("monitor signal absent")]
    MissingMonitor,
    #[error("monitor value {value} at shot {shot} is not positive")]
    NonPositiveMonitor { shot: usize, value: f64 },
    #[error("degenerate reconstruction: all non-excluded values are equal")]
    DegenerateReconstruction,
    #[error("all pixels excluded from metric")]
    AllPixelsExcluded,
    #[error("spc_corrected requested but the monitor is disabled")]
    MonitorDisabled,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown preset '{0}' (expected fig2, fig3, fig4 or fig5)")]
    UnknownPreset(String),
}

impl SpiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SpiError::Io {
            path: path.into(),
            source,
        }
    }
}
