//! Ordered message passing for node classification.
//!
//! The crate is built around a small reverse-mode autodiff [`Tape`], a CSR
//! [`Graph`](graph::Graph) with dataset loaders, the [`OrderedGnn`] model
//! with its ablation variants, and a training loop with Adam, early
//! stopping and grid search.

pub mod checkpoint;
pub mod cli;
pub mod config;
mod error;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use matrix::{Matrix, Precision, Real};
pub use model::{ModelConfig, OrderedGnn, Variant};
pub use tensor::{OpKind, Tape, ValueId};
