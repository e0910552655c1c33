//! UPOC2: unified pre-training and fine-tuning for product-oriented
//! (multimodal) machine translation at desk scale.
//!
//! The crate is organized around the training pipeline:
//! - [`tensor`]: f64 autodiff engine with Adam and gradient checking
//! - [`data`]: corpus files, vocabulary, batching, synthetic generator
//! - [`model`]: multimodal transformer, heads, checkpoints
//! - [`objectives`]: MTLM / ISM / ATTP pre-training and PMT fine-tuning
//! - [`training`]: schedules and loops
//! - [`metrics`]: corpus BLEU and CIDEr
//! - [`decode`]: iterative mask-feed translation and evaluation

pub mod batch;
pub mod data;
pub mod decode;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
