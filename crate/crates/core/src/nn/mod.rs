//! Minimal dense-network training stack: matrices, a residual MLP with
//! reverse-mode gradients, Adam, and checkpoint serialization.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, meta_as, save_checkpoint, CheckpointError};
pub use matrix::Matrix;
pub use mlp::{Mlp, MlpSpec, MlpTape, Mode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value")]
    NonFinite,
}
