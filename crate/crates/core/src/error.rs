use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rect {rect:?} does not fit inside a {height}x{width} image")]
    OutOfBounds {
        rect: crate::imaging::Rect,
        height: usize,
        width: usize,
    },

    #[error("PAGE-XML: {0}")]
    PageXml(String),

    #[error("illegal label color ({r},{g},{b}) at pixel (x={x}, y={y})")]
    IllegalLabelColor {
        x: usize,
        y: usize,
        r: u8,
        g: u8,
        b: u8,
    },

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
