//! Answer selection over product specifications.
//!
//! A question and a candidate specification name are each encoded by one
//! shared bidirectional LSTM with max-over-time pooling, and a bilinear form
//! `σ(qᵀMs + b)` scores their relevance. Models are pretrained on community
//! QA pairs and fine-tuned on specification pairs.

pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod scorer;
pub mod serve;
pub mod synth;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
