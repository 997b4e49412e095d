//! Deep autoencoders trained greedily layer by layer or jointly end to end,
//! with per-layer corruption and regularization, and the evaluation tools
//! used to compare them: GSN-style sampling with Parzen-window likelihoods,
//! linear probes on frozen features and supervised finetuning.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, dataset
//! loaders and the command line live in the `deepstack` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod data;
pub mod error;
pub mod generative;
pub mod gradcheck;
pub mod matrix;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{Activation, LayerParams, StackParams};
pub use objectives::{CorruptionSpec, LossSpec, Objective, RegularizerSpec};
pub use rng::RngState;
