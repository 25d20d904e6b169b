use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::FrameDims;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame dimensions {width}x{height}: {reason}")]
    InvalidDims {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("pixel ({x}, {y}) outside {}x{} frame", dims.width, dims.height)]
    OutOfRange { x: f64, y: f64, dims: FrameDims },

    #[error("dimension mismatch: {what} is {}x{}, expected {}x{}", got.width, got.height, expected.width, expected.height)]
    DimMismatch {
        what: &'static str,
        expected: FrameDims,
        got: FrameDims,
    },

    #[error("channel mismatch: {what} has {got} channels, expected {expected}")]
    ChannelMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rotation is not orthonormal (deviation {0:e})")]
    NonUnitRotation(f64),

    #[error("flow format error: {0}")]
    FlowFormat(String),

    #[error("image decode error in {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("coefficient file error: {0}")]
    Coefficients(String),

    #[error("I/O error on {path}: {source}")]
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
