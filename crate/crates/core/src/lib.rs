//! View-invariant pose embeddings: pose canonicalization, a pose VAE with
//! triplet-mined training, 2D-to-embedding lifting through a frozen decoder,
//! cross-view retrieval evaluation, and embedding-space generation tools.

pub mod camera;
pub mod config;
pub mod data;
pub mod experiment;
pub mod genlab;
pub mod mapper2d;
pub mod nn;
pub mod pose;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod vae;
