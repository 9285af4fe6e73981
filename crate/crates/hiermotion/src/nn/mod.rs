//! Minimal tensor/autodiff/layer substrate for the VQ-VAE and the DDPM
//! transformers: a reverse-mode tape over `ndarray` storage, the layers the
//! models need, Adam, finite-difference gradient checking and a versioned
//! checkpoint format.

mod adam;
mod norm;
mod checkpoint;
mod embed;
mod gradcheck;
mod graph;
mod layers;
mod scalar;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use embed::sinusoidal_embed;
pub use gradcheck::grad_check;
pub use graph::{attention_forward, causal_mask, neg_mask_value, Graph, Var};
pub use layers::{
    randn_init,
    Embedding, LayerNormLayer, Linear, Mlp, MultiHeadAttention, ParamStore, Transformer,
    TransformerBlock,
};
pub use norm::Normalizer;
pub use scalar::Scalar;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sinusoidal embedding dim must be even, got {0}")]
    OddEmbedDim(usize),
    #[error("grad_check target must be scalar-valued")]
    NonScalarOutput,
    #[error("missing parameter {0:?}")]
    MissingParam(String),
    #[error("parameter {name:?} has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint dtype is {got}, expected {expected}")]
    DtypeMismatch { expected: String, got: String },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
