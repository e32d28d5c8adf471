//! Decoder language model: configuration, forward builds, training, and
//! decoding.

pub mod config;
pub mod decode;
pub mod model;
pub mod provider;
pub mod train;

pub use config::{DecodeMode, DecoderConfig, DecodingConfig, TrainConfig};
pub use decode::generate;
pub use model::{biased_softmax, next_token_dist, sequence_log_probs, DecoderLM, Forward};
pub use provider::{Bias, BiasProvider, ZeroBias};
pub use train::{train, EpochRecord, TrainOutcome};
