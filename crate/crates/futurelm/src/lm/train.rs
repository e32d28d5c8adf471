//! Joint training of the decoder and an optional bias head.
//!
//! Batches are grouped by year so a head's per-year recurrence is built
//! once per batch rather than once per document.

use crate::bias::encoder::frame;
use crate::bias::{attach, BiasHead, HeadResources};
use crate::corpus::TemporalCorpus;
use crate::error::{Error, Result};
use crate::lm::config::TrainConfig;
use crate::lm::model::{DecoderLM, TOK_EMB};
use crate::lm::provider::ZeroBias;
use crate::metrics::perplexity;
use crate::numerics::adam::{AdamConfig, AdamState};
use crate::numerics::{NodeId, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_ppl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_dev_ppl: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn dev_ppl(
    model: &DecoderLM,
    head: Option<&BiasHead>,
    res: &HeadResources,
    dev: &TemporalCorpus,
) -> Result<f64> {
    match head {
        Some(h) => {
            let provider = attach(h, model, *res)?;
            Ok(perplexity(model, &provider, dev)?.0)
        }
        None => Ok(perplexity(model, &ZeroBias, dev)?.0),
    }
}

/// Train in place; on return the model holds the parameters of the best
/// dev-perplexity epoch. Fully deterministic in `cfg.seed`.
pub fn train(
    model: &mut DecoderLM,
    head: Option<&BiasHead>,
    res: &HeadResources,
    train_corpus: &TemporalCorpus,
    dev_corpus: &TemporalCorpus,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !train_corpus.is_tokenized() || !dev_corpus.is_tokenized() {
        return Err(Error::State("training needs tokenized corpora".into()));
    }
    let vocab_size = train_corpus.vocabulary.as_ref().unwrap().size();
    if vocab_size != model.config.vocab_size {
        return Err(Error::Contract(format!(
            "corpus vocabulary {vocab_size} vs model vocabulary {}",
            model.config.vocab_size
        )));
    }
    if head.is_some() && !model.params.names().any(|n| n.starts_with("head.")) {
        return Err(Error::State(
            "bias head given but its parameters are not in the model".into(),
        ));
    }
    if cfg.freeze_lm && head.is_none() {
        return Err(Error::Config(
            "freezing the language model without a head leaves nothing to train".into(),
        ));
    }

    // year-window restriction: keep the most recent n populated years
    let mut years: Vec<i32> = train_corpus
        .docs_by_year
        .iter()
        .filter(|(_, d)| !d.is_empty())
        .map(|(&y, _)| y)
        .collect();
    if let Some(n) = cfg.year_window {
        if years.len() > n {
            years = years.split_off(years.len() - n);
        }
    }
    if years.is_empty() {
        return Err(Error::Config("no training documents in the selected years".into()));
    }

    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &model.params,
    )?;
    let frozen: Vec<bool> = model
        .params
        .names()
        .map(|n| cfg.freeze_lm && !n.starts_with("head."))
        .collect();

    let mut log = Vec::new();
    let mut best_params = model.params.clone();
    let mut best_dev = f64::INFINITY;
    let mut best_epoch = 0;
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37));
        let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x85EB) ^ 1);

        // year-homogeneous batches, then shuffled batch order
        let mut batches: Vec<(i32, Vec<usize>)> = Vec::new();
        for &year in &years {
            let docs = &train_corpus.docs_by_year[&year];
            let mut idx: Vec<usize> = (0..docs.len()).collect();
            idx.shuffle(&mut shuffle_rng);
            for chunk in idx.chunks(cfg.batch_size) {
                batches.push((year, chunk.to_vec()));
            }
        }
        batches.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut accum: Vec<Tensor> = model.params.iter().map(|(_, t)| t.zeros_like()).collect();
        let mut accumulated = 0usize;
        let n_batches = batches.len();

        for (b, (year, doc_idx)) in batches.into_iter().enumerate() {
            let docs = &train_corpus.docs_by_year[&year];
            let mut tape = Tape::new();
            let pm = model.params.leaf_all(&mut tape)?;
            let static_bias = match head {
                Some(h) if !h.needs_hidden() => {
                    h.static_bias(&mut tape, &pm, res, year, vocab_size)?
                }
                _ => None,
            };
            let mut losses = Vec::with_capacity(doc_idx.len());
            for &i in &doc_idx {
                let (input, targets) = frame(&docs[i].tokens, model.config.max_len);
                let hidden = model.build_hidden(&mut tape, &pm, &input, true, &mut drop_rng)?;
                let mut logits = model.build_logits(&mut tape, &pm, hidden)?;
                if let Some(bias) = static_bias {
                    logits = tape.add_row(logits, bias)?;
                }
                if let Some(h) = head {
                    if h.needs_hidden() {
                        if let Some(bias) = h.per_position_bias(
                            &mut tape,
                            &pm,
                            res,
                            year,
                            hidden,
                            pm.id(TOK_EMB),
                        )? {
                            logits = tape.add(logits, bias)?;
                        }
                    }
                }
                losses.push(tape.softmax_cross_entropy(logits, &targets)?);
            }
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = tape.add(total, l)?;
            }
            let loss = tape.scale(total, 1.0 / losses.len() as f64)?;
            loss_sum += tape.value(loss).scalar_value();
            let grads = tape.backward(loss)?;
            for i in 0..model.params.len() {
                if frozen[i] {
                    continue;
                }
                let (_, t) = model.params.at(i);
                let g = grads.wrt(NodeId(i), t);
                accum[i].add_assign(&g);
            }
            accumulated += 1;
            if accumulated == cfg.grad_accum || b + 1 == n_batches {
                let scale = 1.0 / accumulated as f64;
                let step_grads: Vec<Tensor> =
                    accum.iter().map(|g| g.map(|v| v * scale)).collect();
                adam.step(&mut model.params, &step_grads)?;
                for g in accum.iter_mut() {
                    *g = g.zeros_like();
                }
                accumulated = 0;
            }
        }

        let train_loss = loss_sum / n_batches as f64;
        let ppl = dev_ppl(model, head, res, dev_corpus)?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            dev_ppl: ppl,
        });
        if ppl < best_dev {
            best_dev = ppl;
            best_epoch = epoch;
            best_params = model.params.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    model.params = best_params;
    Ok(TrainOutcome {
        log,
        best_dev_ppl: best_dev,
        best_epoch,
        stopped_early,
    })
}
