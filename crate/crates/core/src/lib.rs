//! Incremental network quantization toward power-of-two weights, with a
//! small training engine, a packed model format and a shift-add runtime.

pub mod error;
pub mod experiment;
pub mod inq;
pub mod io;
pub mod mask;
pub mod nn;
pub mod quant;
pub mod runtime;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
