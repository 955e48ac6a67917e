use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why a tracked feature was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LostReason {
    /// The 2x2 structure matrix is singular or too badly conditioned.
    IllConditioned,
    /// The sampling window left the frame.
    OutOfFrame,
}

impl std::fmt::Display for LostReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LostReason::IllConditioned => f.write_str("ill-conditioned structure matrix"),
            LostReason::OutOfFrame => f.write_str("window left the frame"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("disparity undefined: derivative vanishes everywhere")]
    UndefinedDisparity,

    #[error("feature lost: {0}")]
    Lost(LostReason),

    #[error("line is parallel to the plane")]
    NoIntersection,

    #[error("line lies in the plane")]
    LineInPlane,

    #[error("geometry construction failed for calibration point {index}: {source}")]
    Construction {
        index: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("image decode: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateDesign(msg.into())
    }
}
