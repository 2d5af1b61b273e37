//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A grid, map, or image dimension is out of contract (too small or mismatched).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A scalar argument is outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bounding box is degenerate or out of range.
    #[error("invalid box: {0}")]
    InvalidBox(String),

    /// Non-finite or otherwise malformed numeric input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The interpolation system matrix is singular.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// The fit's normal equations are catastrophically conditioned even after ridge.
    #[error("ill-conditioned system: condition estimate {estimate:.3e}")]
    IllConditioned { estimate: f64 },

    /// Detections tagged with one grid were applied to another.
    #[error("grid mismatch: detection tagged grid {found}, expected {expected}")]
    GridMismatch { expected: u64, found: u64 },

    /// An external or playback detector failed.
    #[error("detector error: {0}")]
    Detector(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
