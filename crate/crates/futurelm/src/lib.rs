//! Desk-scale future language modeling.
//!
//! Trains a small decoder language model over year-sliced corpora, augments
//! its softmax with temporally predicted per-word biases, and evaluates
//! generated future text with perplexity, content perplexity, and
//! content-Meteor metrics.

pub mod bias;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod lm;
pub mod metrics;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
