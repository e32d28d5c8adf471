//! Evaluation: perplexity, content perplexity, exact-match unigram
//! alignment scoring, and the paired sign test.

use crate::corpus::{StopwordList, TemporalCorpus};
use crate::error::{Error, Result};
use crate::lm::config::DecodingConfig;
use crate::lm::decode::generate;
use crate::lm::model::{sequence_log_probs, DecoderLM};
use crate::lm::provider::BiasProvider;
use serde::{Deserialize, Serialize};

/// Clip to the model's context window (one slot goes to the sentinel).
fn clip(tokens: &[u32], max_len: usize) -> &[u32] {
    &tokens[..tokens.len().min(max_len - 1)]
}

/// Corpus perplexity `2^(-(1/M) sum log2 p)` over every target position
/// including the end-of-sequence event. Returns `(ppl, M)`.
pub fn perplexity(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    corpus: &TemporalCorpus,
) -> Result<(f64, usize)> {
    let mut log2_sum = 0.0;
    let mut m = 0usize;
    for (&year, docs) in &corpus.docs_by_year {
        for doc in docs {
            let lp = sequence_log_probs(
                model,
                provider,
                year,
                clip(&doc.tokens, model.config.max_len),
            )?;
            log2_sum += lp.iter().sum::<f64>() / std::f64::consts::LN_2;
            m += lp.len();
        }
    }
    if m == 0 {
        return Err(Error::Eval("perplexity over an empty corpus".into()));
    }
    Ok(((2f64).powf(-log2_sum / m as f64), m))
}

/// Perplexity restricted to content targets: stopword targets still
/// condition the model but are excluded from the average.
pub fn content_perplexity(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    corpus: &TemporalCorpus,
    stopwords: &StopwordList,
) -> Result<(f64, usize)> {
    let mut log2_sum = 0.0;
    let mut m = 0usize;
    for (&year, docs) in &corpus.docs_by_year {
        for doc in docs {
            let tokens = clip(&doc.tokens, model.config.max_len);
            let lp = sequence_log_probs(model, provider, year, tokens)?;
            let mut targets: Vec<u32> = tokens.to_vec();
            targets.push(crate::corpus::Vocabulary::EOS_ID);
            for (&t, &l) in targets.iter().zip(&lp) {
                if !stopwords.contains(t) {
                    log2_sum += l / std::f64::consts::LN_2;
                    m += 1;
                }
            }
        }
    }
    if m == 0 {
        return Err(Error::Eval("no content targets in corpus".into()));
    }
    Ok(((2f64).powf(-log2_sum / m as f64), m))
}

/// Exact-match unigram alignment score with a fragmentation penalty:
/// matched mass `m` is extracted as maximal common runs (chunks), then
/// `F = 10PR / (R + 9P)` discounted by `0.5 (chunks/m)^3`.
pub fn meteor(candidate: &[u32], reference: &[u32]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut cand: Vec<Option<u32>> = candidate.iter().copied().map(Some).collect();
    let mut refr: Vec<Option<u32>> = reference.iter().copied().map(Some).collect();
    let mut matched = 0usize;
    let mut chunks = 0usize;
    loop {
        // longest common contiguous run over the unmatched remainder
        let mut best: Option<(usize, usize, usize)> = None; // (len, ci, ri)
        for ci in 0..cand.len() {
            for ri in 0..refr.len() {
                let mut len = 0;
                while ci + len < cand.len()
                    && ri + len < refr.len()
                    && cand[ci + len].is_some()
                    && cand[ci + len] == refr[ri + len]
                {
                    len += 1;
                }
                if len > best.map_or(0, |b| b.0) {
                    best = Some((len, ci, ri));
                }
            }
        }
        let Some((len, ci, ri)) = best else {
            break;
        };
        for k in 0..len {
            cand[ci + k] = None;
            refr[ri + k] = None;
        }
        matched += len;
        chunks += 1;
    }
    if matched == 0 {
        return 0.0;
    }
    let p = matched as f64 / candidate.len() as f64;
    let r = matched as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / matched as f64).powi(3);
    f * (1.0 - penalty)
}

fn content_only(tokens: &[u32], stopwords: &StopwordList) -> Vec<u32> {
    tokens
        .iter()
        .copied()
        .filter(|&t| !stopwords.contains(t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ContentMeteorConfig {
    /// Number of generated documents.
    pub n_g: usize,
    pub decoding: DecodingConfig,
}

/// Generate `n_g` documents for `year` (seeds `seed..seed+n_g`) and score
/// each against its best-matching reference on content words only:
/// `100 * mean_i max_j meteor(gen_i, ref_j)`.
pub fn content_meteor(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    year: i32,
    references: &[Vec<u32>],
    stopwords: &StopwordList,
    cfg: &ContentMeteorConfig,
) -> Result<f64> {
    if cfg.n_g == 0 {
        return Err(Error::Config("need at least one generated document".into()));
    }
    if references.is_empty() {
        return Err(Error::Eval("no reference documents".into()));
    }
    let refs: Vec<Vec<u32>> = references
        .iter()
        .map(|r| content_only(r, stopwords))
        .collect();
    let mut total = 0.0;
    for i in 0..cfg.n_g {
        let mut dcfg = cfg.decoding.clone();
        dcfg.seed = cfg.decoding.seed + i as u64;
        let gen = generate(model, provider, year, &dcfg)?;
        let gen = content_only(&gen, stopwords);
        let best = refs
            .iter()
            .map(|r| meteor(&gen, r))
            .fold(0.0f64, f64::max);
        total += best;
    }
    Ok(100.0 * total / cfg.n_g as f64)
}

/// Two-sided exact sign test: probability under fair coin flips of a
/// split at least as extreme as `wins` / `losses` (ties dropped upstream).
pub fn sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    // P(X <= k) for X ~ Binomial(n, 1/2), doubled and capped at 1
    let ln_half = 0.5f64.ln();
    let mut tail = 0.0;
    for i in 0..=k {
        tail += (ln_choose(n, i) + n as f64 * ln_half).exp();
    }
    (2.0 * tail).min(1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// One evaluation run over a test slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub ppl: f64,
    pub cpl: f64,
    /// Generation-based score; absent when generation was not requested.
    pub cm: Option<f64>,
    /// Targets scored by `ppl`.
    pub m_tokens: usize,
    /// Content targets scored by `cpl`.
    pub ms_tokens: usize,
    pub n_g: usize,
    pub n_h: usize,
    pub checkpoint_id: String,
    pub seed: u64,
}

pub struct EvalOptions {
    pub stopwords: StopwordList,
    /// When set, also run generation-based scoring.
    pub content_meteor: Option<ContentMeteorConfig>,
    pub checkpoint_id: String,
    pub seed: u64,
}

/// Full evaluation of a model (with bias provider) on one test slice.
pub fn evaluate(
    model: &DecoderLM,
    provider: &dyn BiasProvider,
    test: &TemporalCorpus,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let (ppl, m_tokens) = perplexity(model, provider, test)?;
    let (cpl, ms_tokens) = content_perplexity(model, provider, test, &opts.stopwords)?;
    let n_h = test.doc_count();
    let mut cm = None;
    let mut n_g = 0;
    if let Some(cm_cfg) = &opts.content_meteor {
        let year = *test.years.last().ok_or_else(|| Error::Eval("empty test slice".into()))?;
        let refs: Vec<Vec<u32>> = test.docs().map(|d| d.tokens.clone()).collect();
        cm = Some(content_meteor(
            model,
            provider,
            year,
            &refs,
            &opts.stopwords,
            cm_cfg,
        )?);
        n_g = cm_cfg.n_g;
    }
    Ok(EvalReport {
        ppl,
        cpl,
        cm,
        m_tokens,
        ms_tokens,
        n_g,
        n_h,
        checkpoint_id: opts.checkpoint_id.clone(),
        seed: opts.seed,
    })
}
