use std::convert::Infallible;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer {layer}: {message}")]
    LayerShape { layer: usize, message: String },

    #[error("invalid layer specification: {0}")]
    InvalidLayer(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("tensor is empty")]
    EmptyTensor,

    #[error("max |w| must be positive and finite, got {0}")]
    NonPositiveScale(f64),

    #[error("cannot build a grid for an all-zero weight tensor")]
    AllZeroWeights,

    #[error("invalid bit-width {0} (must be at least 2)")]
    InvalidBitWidth(u32),

    #[error("grid exponents [{n2}, {n1}] leave the normal floating-point range")]
    GridOutOfRange { n1: i32, n2: i32 },

    #[error("cannot quantize a NaN weight")]
    NanWeight,

    #[error("index {index} out of range for tensor of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown schedule preset {0:?}")]
    UnknownPreset(String),

    #[error("target frozen count {target} is below the current frozen count {frozen}")]
    TargetBelowFrozen { target: usize, frozen: usize },

    #[error("target frozen count {target} exceeds layer size {size}")]
    TargetAboveSize { target: usize, size: usize },

    #[error("accumulated portion {sigma} does not exceed the previous portion {previous}")]
    SigmaNotIncreasing { sigma: f64, previous: f64 },

    #[error("frozen weight changed in layer {layer} at index {index}")]
    FrozenWeightChanged { layer: usize, index: usize },

    #[error("weight {value} at index {index} is not a level of the grid")]
    NotInGrid { index: usize, value: f64 },

    #[error("bitstream truncated: needed {needed} bits, have {available}")]
    TruncatedStream { needed: usize, available: usize },

    #[error("exponent index {index} out of range for {bits}-bit grid")]
    ExponentIndexOutOfRange { index: u32, bits: u32 },

    #[error("bad magic number")]
    BadMagic,

    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("checksum mismatch in section {section}")]
    ChecksumMismatch { section: usize },

    #[error("malformed container: {0}")]
    Malformed(String),

    #[error("IDX format: {0}")]
    Idx(String),

    #[error("shift scaling of {value} by 2^{exponent} leaves the normal range")]
    ScaleRange { value: f64, exponent: i32 },

    #[error("model is not fully quantized: {0}")]
    NotQuantized(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<Infallible> for Error {
    fn from(never: Infallible) -> Self {
        match never {}
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
