//! Decoding strategies: greedy, filtered sampling, and sampled beams.

use crate::corpus::Vocabulary;
use crate::error::Result;
use crate::lm::config::{DecodeMode, DecodingConfig};
use crate::lm::model::{next_token_dist_t, DecoderLM};
use crate::lm::provider::BiasProvider;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Keep the `k` most probable tokens, then the smallest nucleus whose
/// cumulative mass reaches `p`; renormalize. Ties break toward lower ids.
pub fn filter_top_k_p(probs: &[f64], k: usize, p: f64) -> Vec<(u32, f64)> {
    let mut order: Vec<u32> = (0..probs.len() as u32).collect();
    order.sort_by(|&a, &b| {
        probs[b as usize]
            .partial_cmp(&probs[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k.max(1));
    let mut kept = Vec::new();
    let mut cum = 0.0;
    for id in order {
        kept.push((id, probs[id as usize]));
        cum += probs[id as usize];
        if cum >= p {
            break;
        }
    }
    let total: f64 = kept.iter().map(|(_, q)| q).sum();
    for (_, q) in kept.iter_mut() {
        *q /= total;
    }
    kept
}

fn sample_from(kept: &[(u32, f64)], rng: &mut impl Rng) -> u32 {
    let r: f64 = rng.gen();
    let mut cum = 0.0;
    for &(id, q) in kept {
        cum += q;
        if r < cum {
            return id;
        }
    }
    kept.last().unwrap().0
}

/// Generate one document for `year`. The returned tokens exclude the
/// sequence-end sentinel. Deterministic in `cfg.seed`.
pub fn generate(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    year: i32,
    cfg: &DecodingConfig,
) -> Result<Vec<u32>> {
    cfg.validate()?;
    // leave room for the leading sentinel in the context window
    let max_tokens = cfg.max_tokens.min(model.config.max_len - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.mode {
        DecodeMode::Greedy => {
            let mut out = Vec::new();
            while out.len() < max_tokens {
                let probs = next_token_dist_t(model, provider, year, &out, cfg.temperature)?;
                let next = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .unwrap()
                    .0 as u32;
                if next == Vocabulary::EOS_ID {
                    break;
                }
                out.push(next);
            }
            Ok(out)
        }
        DecodeMode::Sample => {
            let mut out = Vec::new();
            while out.len() < max_tokens {
                let probs = next_token_dist_t(model, provider, year, &out, cfg.temperature)?;
                let kept = filter_top_k_p(&probs, cfg.top_k, cfg.top_p);
                let next = sample_from(&kept, &mut rng);
                if next == Vocabulary::EOS_ID {
                    break;
                }
                out.push(next);
            }
            Ok(out)
        }
        DecodeMode::BeamSample => beam_sample(model, provider, year, cfg, max_tokens, &mut rng),
    }
}

struct Beam {
    tokens: Vec<u32>,
    log_prob: f64,
}

/// Sampled beam search: each live beam proposes up to `beam` sampled
/// continuations from the filtered distribution, then the `beam` best by
/// cumulative log-probability survive. Beams emitting the sequence-end
/// token retire into the finished pool.
fn beam_sample(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    year: i32,
    cfg: &DecodingConfig,
    max_tokens: usize,
    rng: &mut impl Rng,
) -> Result<Vec<u32>> {
    let mut live = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Beam> = Vec::new();
    for _ in 0..max_tokens {
        let mut candidates: Vec<Beam> = Vec::new();
        for beam in &live {
            let probs = next_token_dist_t(model, provider, year, &beam.tokens, cfg.temperature)?;
            let kept = filter_top_k_p(&probs, cfg.top_k, cfg.top_p);
            let mut chosen: Vec<u32> = Vec::new();
            for _ in 0..cfg.beam {
                let next = sample_from(&kept, rng);
                if !chosen.contains(&next) {
                    chosen.push(next);
                }
            }
            for next in chosen {
                // score with the unfiltered model probability
                let mut tokens = beam.tokens.clone();
                let lp = beam.log_prob + probs[next as usize].ln();
                if next == Vocabulary::EOS_ID {
                    finished.push(Beam {
                        tokens: tokens.clone(),
                        log_prob: lp,
                    });
                } else {
                    tokens.push(next);
                    candidates.push(Beam {
                        tokens,
                        log_prob: lp,
                    });
                }
            }
        }
        candidates.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap());
        candidates.truncate(cfg.beam);
        live = candidates;
        if live.is_empty() {
            break;
        }
    }
    let best = finished
        .into_iter()
        .chain(live)
        .max_by(|a, b| a.log_prob.partial_cmp(&b.log_prob).unwrap());
    Ok(best.map(|b| b.tokens).unwrap_or_default())
}
