//! Minimal deterministic neural-network engine on `f64` tensors.
//!
//! Image tensors are NHWC. Convolutions lower to im2col + GEMM; the
//! transposed convolution is implemented as the exact adjoint of the
//! strided convolution. Everything runs single-threaded so that a fixed seed
//! reproduces training bit for bit.

pub mod layers;
pub mod network;
pub mod optim;
pub mod serialize;
pub mod tensor;

use thiserror::Error;

pub use layers::{Layer, LayerSpec, Mode};
pub use network::{mse, Network, Sequential};
pub use optim::{Adam, AdamConfig};
pub use serialize::{ModelFile, MODEL_SCHEMA_VERSION};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called on {0} before forward")]
    NoForward(&'static str),
    #[error("batch normalization needs at least two samples per training batch")]
    BatchTooSmall,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
