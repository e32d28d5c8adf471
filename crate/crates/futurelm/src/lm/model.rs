//! Decoder-only transformer with tied input/output embeddings.

use crate::error::{Error, Result};
use crate::lm::config::DecoderConfig;
use crate::lm::provider::BiasProvider;
use crate::numerics::{NodeId, ParamMap, ParamSet, Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rand::SeedableRng;

pub const TOK_EMB: &str = "lm.tok_emb";

#[derive(Debug, Clone)]
pub struct DecoderLM {
    pub config: DecoderConfig,
    /// Holds `lm.*` parameters; bias-head parameters (`head.*`) may be
    /// appended so one optimizer covers both.
    pub params: ParamSet,
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).unwrap();
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

impl DecoderLM {
    pub fn new(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let d = config.d_model;
        ps.add(TOK_EMB, normal(config.vocab_size, d, 0.02, &mut rng))?;
        ps.add("lm.pos_emb", normal(config.max_len, d, 0.02, &mut rng))?;
        for l in 0..config.layers {
            let p = format!("lm.l{l}");
            ps.add(&format!("{p}.ln1.g"), Tensor::row(vec![1.0; d]))?;
            ps.add(&format!("{p}.ln1.b"), Tensor::row(vec![0.0; d]))?;
            ps.add(&format!("{p}.attn.wq"), normal(d, d, 0.02, &mut rng))?;
            ps.add(&format!("{p}.attn.wk"), normal(d, d, 0.02, &mut rng))?;
            ps.add(&format!("{p}.attn.wv"), normal(d, d, 0.02, &mut rng))?;
            ps.add(&format!("{p}.attn.wo"), normal(d, d, 0.02, &mut rng))?;
            ps.add(&format!("{p}.attn.bo"), Tensor::row(vec![0.0; d]))?;
            ps.add(&format!("{p}.ln2.g"), Tensor::row(vec![1.0; d]))?;
            ps.add(&format!("{p}.ln2.b"), Tensor::row(vec![0.0; d]))?;
            ps.add(&format!("{p}.ffn.w1"), normal(d, config.d_ff, 0.02, &mut rng))?;
            ps.add(&format!("{p}.ffn.b1"), Tensor::row(vec![0.0; config.d_ff]))?;
            ps.add(&format!("{p}.ffn.w2"), normal(config.d_ff, d, 0.02, &mut rng))?;
            ps.add(&format!("{p}.ffn.b2"), Tensor::row(vec![0.0; d]))?;
        }
        ps.add("lm.lnf.g", Tensor::row(vec![1.0; d]))?;
        ps.add("lm.lnf.b", Tensor::row(vec![0.0; d]))?;
        Ok(DecoderLM { config, params: ps })
    }

    pub fn from_parts(config: DecoderConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let emb = params
            .get(TOK_EMB)
            .ok_or_else(|| Error::Contract("parameter set lacks the token embedding".into()))?;
        if emb.rows() != config.vocab_size || emb.cols() != config.d_model {
            return Err(Error::Contract(format!(
                "embedding shape {:?} vs config vocab {} dim {}",
                emb.shape(),
                config.vocab_size,
                config.d_model
            )));
        }
        Ok(DecoderLM { config, params })
    }

    /// Decoder states for every input position (`n x d`, after the final
    /// layer norm), built on the tape.
    pub fn build_hidden(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        tokens: &[u32],
        train: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        let cfg = &self.config;
        let n = tokens.len();
        if n == 0 {
            return Err(Error::Contract("empty input sequence".into()));
        }
        if n > cfg.max_len {
            return Err(Error::Contract(format!(
                "sequence length {n} exceeds maximum {}",
                cfg.max_len
            )));
        }
        let dh = cfg.d_model / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let positions: Vec<u32> = (0..n as u32).collect();
        let tok = tape.embed(pm.id(TOK_EMB), tokens)?;
        let pos = tape.embed(pm.id("lm.pos_emb"), &positions)?;
        let mut x = tape.add(tok, pos)?;
        x = tape.dropout(x, cfg.dropout, train, rng)?;
        for l in 0..cfg.layers {
            let p = format!("lm.l{l}");
            let x1 = tape.layer_norm(x, pm.id(&format!("{p}.ln1.g")), pm.id(&format!("{p}.ln1.b")))?;
            let q = tape.matmul(x1, pm.id(&format!("{p}.attn.wq")))?;
            let k = tape.matmul(x1, pm.id(&format!("{p}.attn.wk")))?;
            let v = tape.matmul(x1, pm.id(&format!("{p}.attn.wv")))?;
            let mut heads = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let qh = tape.slice_cols(q, h * dh, dh)?;
                let kh = tape.slice_cols(k, h * dh, dh)?;
                let vh = tape.slice_cols(v, h * dh, dh)?;
                let scores = tape.matmul_bt(qh, kh)?;
                let scores = tape.scale(scores, scale)?;
                let att = tape.causal_softmax_rows(scores)?;
                heads.push(tape.matmul(att, vh)?);
            }
            let merged = tape.concat_cols(&heads)?;
            let proj = tape.matmul(merged, pm.id(&format!("{p}.attn.wo")))?;
            let proj = tape.add_row(proj, pm.id(&format!("{p}.attn.bo")))?;
            let proj = tape.dropout(proj, cfg.dropout, train, rng)?;
            x = tape.add(x, proj)?;
            let x2 = tape.layer_norm(x, pm.id(&format!("{p}.ln2.g")), pm.id(&format!("{p}.ln2.b")))?;
            let f = tape.matmul(x2, pm.id(&format!("{p}.ffn.w1")))?;
            let f = tape.add_row(f, pm.id(&format!("{p}.ffn.b1")))?;
            let f = tape.tanh(f)?;
            let f = tape.matmul(f, pm.id(&format!("{p}.ffn.w2")))?;
            let f = tape.add_row(f, pm.id(&format!("{p}.ffn.b2")))?;
            let f = tape.dropout(f, cfg.dropout, train, rng)?;
            x = tape.add(x, f)?;
        }
        tape.layer_norm(x, pm.id("lm.lnf.g"), pm.id("lm.lnf.b"))
    }

    /// Tied-embedding logits: `hidden (n x d) * E^T -> n x V`.
    pub fn build_logits(&self, tape: &mut Tape, pm: &ParamMap, hidden: NodeId) -> Result<NodeId> {
        tape.matmul_bt(hidden, pm.id(TOK_EMB))
    }

    /// Evaluation-mode forward pass on a private tape.
    pub fn forward(&self, tokens: &[u32]) -> Result<Forward> {
        let mut tape = Tape::new();
        let pm = self.params.leaf_all(&mut tape)?;
        // dropout is off, so the rng is never consulted
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hidden = self.build_hidden(&mut tape, &pm, tokens, false, &mut rng)?;
        let logits = self.build_logits(&mut tape, &pm, hidden)?;
        Ok(Forward {
            hidden: tape.value(hidden).clone(),
            logits: tape.value(logits).clone(),
        })
    }
}

pub struct Forward {
    pub hidden: Tensor,
    pub logits: Tensor,
}

/// Softmax over `(logits + bias) / temperature`; the next-token rule with
/// the year offset injected before normalization.
pub fn biased_softmax(logits: &[f64], bias: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert_eq!(logits.len(), bias.len());
    let z: Vec<f64> = logits
        .iter()
        .zip(bias)
        .map(|(l, b)| (l + b) / temperature)
        .collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn with_sentinel(prefix: &[u32]) -> Vec<u32> {
    let mut seq = Vec::with_capacity(prefix.len() + 1);
    seq.push(crate::corpus::Vocabulary::EOS_ID);
    seq.extend_from_slice(prefix);
    seq
}

/// Distribution over the next token after `prefix` in `year`. A sentinel
/// end-of-sequence token is prepended, so an empty prefix asks for the
/// first word of a document.
pub fn next_token_dist(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    year: i32,
    prefix: &[u32],
) -> Result<Vec<f64>> {
    next_token_dist_t(model, provider, year, prefix, 1.0)
}

pub(crate) fn next_token_dist_t(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    year: i32,
    prefix: &[u32],
    temperature: f64,
) -> Result<Vec<f64>> {
    let seq = with_sentinel(prefix);
    let fwd = model.forward(&seq)?;
    let last = seq.len() - 1;
    let bias = provider.bias_for(year, &fwd.hidden)?;
    let brow = bias.row(last, model.config.vocab_size)?;
    Ok(biased_softmax(fwd.logits.row_slice(last), &brow, temperature))
}

/// Log-probability (nats) of each token of `tokens` plus the final
/// end-of-sequence event, under the biased model for `year`.
pub fn sequence_log_probs(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    year: i32,
    tokens: &[u32],
) -> Result<Vec<f64>> {
    let input = with_sentinel(tokens);
    let mut targets: Vec<u32> = tokens.to_vec();
    targets.push(crate::corpus::Vocabulary::EOS_ID);
    let fwd = model.forward(&input)?;
    let bias = provider.bias_for(year, &fwd.hidden)?;
    let v = model.config.vocab_size;
    let mut out = Vec::with_capacity(targets.len());
    for (pos, &t) in targets.iter().enumerate() {
        let brow = bias.row(pos, v)?;
        let probs = biased_softmax(fwd.logits.row_slice(pos), &brow, 1.0);
        out.push(probs[t as usize].ln());
    }
    Ok(out)
}
