//! Neural sequence tagging for semantic tags and parts of speech.
//!
//! A bidirectional GRU reads word embeddings and/or character-level word
//! vectors produced by a basic CNN or a pre-activation ResNet; an optional
//! residual bypass adds the character vectors straight into the layer below
//! the softmax, and an optional second softmax head carries an auxiliary
//! loss (coarse semantic tags, or semantic tags while learning POS).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod par;
pub mod tensor;
pub mod train;

pub use error::{Error, LoadError, Result};
