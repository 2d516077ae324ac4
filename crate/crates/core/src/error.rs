//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// NIfTI magic bytes are not "n+1\0".
    BadMagic,
    /// NIfTI datatype code outside the supported {uint8, int16, float32} set.
    UnsupportedDatatype(i16),
    /// Stream ends before `vox_offset + nx*ny*nz*bitpix/8` bytes.
    TruncatedData { expected: usize, actual: usize },
    /// A header field violates a NIfTI-1 invariant.
    InvalidHeader(String),
    /// Volume too small to resample (nx or ny < 2).
    DegenerateVolume,
    /// Constant-intensity volume cannot be range-matched.
    DegenerateIntensityRange,
    /// Patch size exceeds the slice dimensions.
    PatchLargerThanSlice,
    /// A stitched output pixel is covered by no patch.
    UncoveredPixel { x: usize, y: usize },
    /// A patch extends past the stitch target.
    PatchOutOfBounds,
    /// Paired image/mask dims disagree.
    DimensionMismatch,
    /// Tensor shapes inconsistent with the operation.
    ShapeMismatch(String),
    /// 2x2 pooling requires even spatial dims.
    OddSpatialDims { h: usize, w: usize },
    /// Network input spatial size not divisible by 2^depth.
    BadSpatialSize { size: usize, depth: usize },
    EmptyDataset,
    EmptyCohort,
    /// Phantom discs cannot fit inside the requested dims.
    ConfigInfeasible(String),
    /// Table/curve emission requires at least one run record.
    IncompleteGrid,
    /// Malformed serialized container (patches.bin, checkpoint).
    BadContainer(String),
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BadMagic => write!(f, "bad NIfTI magic (expected \"n+1\\0\")"),
            Error::UnsupportedDatatype(code) => {
                write!(f, "unsupported NIfTI datatype code {code}")
            }
            Error::TruncatedData { expected, actual } => {
                write!(f, "truncated data: need {expected} bytes, got {actual}")
            }
            Error::InvalidHeader(msg) => write!(f, "invalid NIfTI header: {msg}"),
            Error::DegenerateVolume => write!(f, "volume has in-plane dims < 2"),
            Error::DegenerateIntensityRange => {
                write!(f, "constant volume has no intensity range to match")
            }
            Error::PatchLargerThanSlice => write!(f, "patch size exceeds slice dims"),
            Error::UncoveredPixel { x, y } => {
                write!(f, "stitch target pixel ({x}, {y}) covered by no patch")
            }
            Error::PatchOutOfBounds => write!(f, "patch extends outside the stitch target"),
            Error::DimensionMismatch => write!(f, "volume dimensions do not match"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::OddSpatialDims { h, w } => {
                write!(f, "2x2 pooling needs even spatial dims, got {h}x{w}")
            }
            Error::BadSpatialSize { size, depth } => {
                write!(f, "input size {size} not divisible by 2^{depth}")
            }
            Error::EmptyDataset => write!(f, "training dataset is empty"),
            Error::EmptyCohort => write!(f, "evaluation cohort is empty"),
            Error::ConfigInfeasible(msg) => write!(f, "infeasible config: {msg}"),
            Error::IncompleteGrid => write!(f, "no run records to emit"),
            Error::BadContainer(msg) => write!(f, "bad container: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
