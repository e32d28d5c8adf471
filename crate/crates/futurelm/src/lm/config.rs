use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Decoder transformer hyperparameters, with desk-scale defaults sized
/// to train on a CPU in minutes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub vocab_size: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            max_len: 128,
            dropout: 0.1,
            vocab_size: 0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.heads == 0
            || self.d_model == 0
            || self.d_ff == 0
            || self.vocab_size == 0
        {
            return Err(Error::Config(format!("all decoder dimensions must be positive: {self:?}")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "model dimension {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max sequence length must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0,1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    Greedy,
    Sample,
    BeamSample,
}

/// Decoding settings; defaults follow beam 5, k 50, p 0.92.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub mode: DecodeMode,
    pub beam: usize,
    pub top_k: usize,
    pub top_p: f64,
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            mode: DecodeMode::BeamSample,
            beam: 5,
            top_k: 50,
            top_p: 0.92,
            max_tokens: 64,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl DecodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam < 1 {
            return Err(Error::Config("beam size must be >= 1".into()));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top-k must be >= 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top-p {} not in (0,1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max tokens must be >= 1".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Training-loop settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub lr: f64,
    /// Early-stopping patience in epochs on dev perplexity.
    pub patience: usize,
    /// Baseline-n: restrict training to the n most recent training years.
    pub year_window: Option<usize>,
    pub seed: u64,
    /// Train only head parameters, keeping the LM frozen (ablation).
    pub freeze_lm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 2,
            grad_accum: 2,
            lr: 3e-4,
            patience: 2,
            year_window: None,
            seed: 0,
            freeze_lm: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.grad_accum == 0 {
            return Err(Error::Config("epochs, batch size, grad accumulation must be positive".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.year_window == Some(0) {
            return Err(Error::Config("year window must be >= 1 when set".into()));
        }
        Ok(())
    }
}
