//! Year-sliced contextual encoders: the base decoder fine-tuned briefly on
//! each year's documents, so a word's states reflect that year's usage.

use crate::bias::year_embeddings::YearEncoder;
use crate::corpus::{TemporalCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::lm::model::DecoderLM;
use crate::numerics::adam::{AdamConfig, AdamState};
use crate::numerics::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub struct FineTunedEncoders {
    base: DecoderLM,
    per_year: BTreeMap<i32, DecoderLM>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            epochs: 1,
            batch_size: 4,
            lr: 3e-4,
            seed: 0,
        }
    }
}

impl FineTunedEncoders {
    /// Use one shared model for every year (no fine-tuning).
    pub fn from_single(model: DecoderLM) -> Self {
        FineTunedEncoders {
            base: model,
            per_year: BTreeMap::new(),
        }
    }

    pub fn model_for(&self, year: i32) -> &DecoderLM {
        self.per_year.get(&year).unwrap_or(&self.base)
    }

    /// Fine-tune a copy of `base` on each year slice.
    pub fn fine_tune(
        base: &DecoderLM,
        corpus: &TemporalCorpus,
        years: &[i32],
        cfg: &FineTuneConfig,
    ) -> Result<Self> {
        if !corpus.is_tokenized() {
            return Err(Error::State("fine-tuning needs a tokenized corpus".into()));
        }
        if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.lr <= 0.0 {
            return Err(Error::Config(format!("bad fine-tune settings: {cfg:?}")));
        }
        let mut per_year = BTreeMap::new();
        for &year in years {
            let docs = corpus.docs_by_year.get(&year).cloned().unwrap_or_default();
            let mut model = base.clone();
            if !docs.is_empty() {
                let mut adam = AdamState::new(
                    AdamConfig {
                        lr: cfg.lr,
                        ..AdamConfig::default()
                    },
                    &model.params,
                )?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ year as u64);
                for _ in 0..cfg.epochs {
                    for batch in docs.chunks(cfg.batch_size) {
                        let mut tape = Tape::new();
                        let pm = model.params.leaf_all(&mut tape)?;
                        let mut losses = Vec::new();
                        for doc in batch {
                            let (input, targets) = frame(&doc.tokens, model.config.max_len);
                            let h = model.build_hidden(&mut tape, &pm, &input, true, &mut rng)?;
                            let logits = model.build_logits(&mut tape, &pm, h)?;
                            losses.push(tape.softmax_cross_entropy(logits, &targets)?);
                        }
                        let mut total = losses[0];
                        for &l in &losses[1..] {
                            total = tape.add(total, l)?;
                        }
                        let loss = tape.scale(total, 1.0 / losses.len() as f64)?;
                        let grads = tape.backward(loss)?;
                        let grad_tensors: Vec<Tensor> = (0..model.params.len())
                            .map(|i| {
                                let (_, t) = model.params.at(i);
                                grads.wrt(crate::numerics::NodeId(i), t)
                            })
                            .collect();
                        adam.step(&mut model.params, &grad_tensors)?;
                    }
                }
            }
            per_year.insert(year, model);
        }
        Ok(FineTunedEncoders {
            base: base.clone(),
            per_year,
        })
    }
}

/// Sentinel-framed training pair for one document, truncated to the
/// context window.
pub(crate) fn frame(tokens: &[u32], max_len: usize) -> (Vec<u32>, Vec<u32>) {
    let keep = tokens.len().min(max_len - 1);
    let mut input = Vec::with_capacity(keep + 1);
    input.push(Vocabulary::EOS_ID);
    input.extend_from_slice(&tokens[..keep]);
    let mut targets: Vec<u32> = tokens[..keep].to_vec();
    targets.push(Vocabulary::EOS_ID);
    (input, targets)
}

impl YearEncoder for FineTunedEncoders {
    fn dim(&self) -> usize {
        self.base.config.d_model
    }

    /// Contextual state of each token: decoder hidden at the position
    /// where that token is the input (sentinel prepended).
    fn encode(&self, year: i32, tokens: &[u32]) -> Result<Tensor> {
        let model = self.model_for(year);
        let keep = tokens.len().min(model.config.max_len - 1);
        let mut input = Vec::with_capacity(keep + 1);
        input.push(Vocabulary::EOS_ID);
        input.extend_from_slice(&tokens[..keep]);
        let fwd = model.forward(&input)?;
        let d = model.config.d_model;
        let mut out = Tensor::zeros(tokens.len(), d);
        for i in 0..tokens.len() {
            // tokens beyond the context window reuse the last state
            let src = (i + 1).min(keep);
            out.data_mut()[i * d..(i + 1) * d].copy_from_slice(fwd.hidden.row_slice(src));
        }
        Ok(out)
    }
}
