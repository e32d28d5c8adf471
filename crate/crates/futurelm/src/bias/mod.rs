//! Temporal bias heads and their inference-time adapters.

pub mod encoder;
pub mod heads;
pub mod year_embeddings;

pub use heads::{
    AlphaMode, BiasHead, ContextualBiasHead, FrequencyBiasHead, GatedBiasHead, HeadResources,
};
pub use year_embeddings::{build_year_embeddings, YearEncoder, YearWordEmbeddings};

use crate::error::{Error, Result};
use crate::lm::model::{DecoderLM, TOK_EMB};
use crate::lm::provider::{Bias, BiasProvider};
use crate::numerics::Tensor;
use heads::GatedFactorValues;
use std::cell::RefCell;
use std::collections::BTreeMap;

enum YearCache {
    Zero,
    Static(Vec<f64>),
    Gated(GatedFactorValues),
}

/// Bias provider backed by a trained head and its data resources. Year
/// computations are cached, so evaluating many documents of one year pays
/// for the head recurrence once.
pub struct HeadBias<'a> {
    head: &'a BiasHead,
    model: &'a DecoderLM,
    res: HeadResources<'a>,
    cache: RefCell<BTreeMap<i32, YearCache>>,
}

/// Bind a head to a model and its resources. The head parameters are read
/// from the model's parameter set (`head.*` names).
pub fn attach<'a>(
    head: &'a BiasHead,
    model: &'a DecoderLM,
    res: HeadResources<'a>,
) -> Result<HeadBias<'a>> {
    let has_head_params = model.params.names().any(|n| n.starts_with("head."));
    if !has_head_params {
        return Err(Error::State(
            "model parameters carry no bias-head weights".into(),
        ));
    }
    if let Some(emb) = res.embeddings {
        let needs = match head {
            BiasHead::Contextual(h) => Some(h.dim),
            BiasHead::FrequencyContextual { contextual, .. } => Some(contextual.dim),
            BiasHead::Gated(h) => Some(h.dim),
            BiasHead::Frequency(_) => None,
        };
        if let Some(d) = needs {
            if emb.dim != d {
                return Err(Error::Contract(format!(
                    "year embeddings have dim {}, head expects {d}",
                    emb.dim
                )));
            }
        }
    }
    Ok(HeadBias {
        head,
        model,
        res,
        cache: RefCell::new(BTreeMap::new()),
    })
}

impl HeadBias<'_> {
    fn compute_year(&self, year: i32) -> Result<YearCache> {
        let vocab_size = self.model.config.vocab_size;
        if let BiasHead::Gated(h) = self.head {
            let emb = self
                .res
                .embeddings
                .ok_or_else(|| Error::State("bias head needs year embeddings".into()))?;
            let table = self.model.params.get(TOK_EMB).unwrap();
            return Ok(match h.factor_values(&self.model.params, emb, year, table)? {
                Some(f) => YearCache::Gated(f),
                None => YearCache::Zero,
            });
        }
        let mut tape = crate::numerics::Tape::new();
        let pm = self.model.params.leaf_all(&mut tape)?;
        match self
            .head
            .static_bias(&mut tape, &pm, &self.res, year, vocab_size)?
        {
            Some(node) => Ok(YearCache::Static(tape.value(node).data().to_vec())),
            None => Ok(YearCache::Zero),
        }
    }
}

impl BiasProvider for HeadBias<'_> {
    fn bias_for(&self, year: i32, hidden: &Tensor) -> Result<Bias> {
        let mut cache = self.cache.borrow_mut();
        if !cache.contains_key(&year) {
            let computed = self.compute_year(year)?;
            cache.insert(year, computed);
        }
        match &cache[&year] {
            YearCache::Zero => Ok(Bias::Zero),
            YearCache::Static(v) => Ok(Bias::Static(v.clone())),
            YearCache::Gated(f) => {
                let d = self.model.config.d_model;
                if hidden.cols() != d {
                    return Err(Error::Contract(format!(
                        "decoder states have width {}, expected {d}",
                        hidden.cols()
                    )));
                }
                let v = f.s.len();
                let n = hidden.rows();
                let mut b = Tensor::zeros(n, v);
                for k in 0..n {
                    let u: f64 = hidden
                        .row_slice(k)
                        .iter()
                        .zip(&f.ca)
                        .map(|(h, c)| h * c)
                        .sum();
                    let row = &mut b.data_mut()[k * v..(k + 1) * v];
                    for w in 0..v {
                        let gate = 1.0 / (1.0 + (-u * f.s[w]).exp());
                        // ts already carries the s factor (ts = t .* s)
                        row[w] = f.alpha * gate * f.ts[w];
                    }
                }
                Ok(Bias::PerPosition(b))
            }
        }
    }
}

/// Export one year's bias vector as `word,bias` CSV lines.
pub fn export_bias_csv(
    provider: &dyn BiasProvider,
    vocab: &crate::corpus::Vocabulary,
    year: i32,
    out: &mut impl std::io::Write,
) -> Result<()> {
    // a single dummy position is enough for position-independent heads;
    // per-position heads export the bias at a zero decoder state
    let hidden = Tensor::zeros(1, 1);
    let bias = match provider.bias_for(year, &hidden) {
        Ok(b) => b,
        Err(_) => Bias::Zero,
    };
    writeln!(out, "word,bias")?;
    let row = match &bias {
        Bias::Zero => vec![0.0; vocab.size()],
        Bias::Static(v) => v.clone(),
        Bias::PerPosition(t) => t.row_slice(0).to_vec(),
    };
    for (w, b) in vocab.words().iter().zip(row) {
        writeln!(out, "{w},{b}")?;
    }
    Ok(())
}
