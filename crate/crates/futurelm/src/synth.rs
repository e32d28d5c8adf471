//! Synthetic temporal corpora with programmed word-frequency drift.
//!
//! Documents are template sentences (fixed function-word skeletons) whose
//! content slots are sampled from a per-year trajectory-weighted
//! distribution, so directional claims about temporal bias heads become
//! testable at desk scale.

use crate::corpus::{Document, FrequencyTable, TemporalCorpus, Vocabulary};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Trajectory {
    /// low + (high-low) / (1 + exp(-rate * (year - midpoint)))
    LogisticRise {
        low: f64,
        high: f64,
        midpoint: f64,
        rate: f64,
    },
    /// low + (high-low) * exp(-rate * (year - 1))
    ExponentialDecay { low: f64, high: f64, rate: f64 },
    Constant { weight: f64 },
}

impl Trajectory {
    /// Sampling weight for a 1-based year index.
    pub fn weight(&self, year: usize) -> f64 {
        let t = year as f64;
        match *self {
            Trajectory::LogisticRise {
                low,
                high,
                midpoint,
                rate,
            } => low + (high - low) / (1.0 + (-rate * (t - midpoint)).exp()),
            Trajectory::ExponentialDecay { low, high, rate } => {
                low + (high - low) * (-rate * (t - 1.0)).exp()
            }
            Trajectory::Constant { weight } => weight,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordDrift {
    pub word: String,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftSpec {
    pub years: usize,
    pub docs_per_year: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    pub rising: Vec<WordDrift>,
    pub falling: Vec<WordDrift>,
    pub stable: Vec<WordDrift>,
    /// Function-word skeletons; `{}` marks a content-word slot.
    pub templates: Vec<String>,
    pub seed: u64,
}

/// Ground-truth trend labels returned alongside the generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendLabels {
    pub rising: Vec<String>,
    pub falling: Vec<String>,
    pub stable: Vec<String>,
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.years < 3 {
            return Err(Error::Config("drift spec needs at least 3 years".into()));
        }
        if self.docs_per_year == 0 {
            return Err(Error::Config("docs_per_year must be positive".into()));
        }
        if self.doc_len_min == 0 || self.doc_len_min > self.doc_len_max {
            return Err(Error::Config(format!(
                "bad document length range [{}, {}]",
                self.doc_len_min, self.doc_len_max
            )));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("drift spec needs at least one template".into()));
        }
        let mut seen = BTreeSet::new();
        for w in self.all_words() {
            if !seen.insert(&w.word) {
                return Err(Error::Config(format!(
                    "word {:?} appears in more than one trend set",
                    w.word
                )));
            }
        }
        for year in 1..=self.years {
            let mut total = 0.0;
            for w in self.all_words() {
                let wt = w.trajectory.weight(year);
                if wt < 0.0 || !wt.is_finite() {
                    return Err(Error::Config(format!(
                        "word {:?} has invalid weight {wt} in year {year}",
                        w.word
                    )));
                }
                total += wt;
            }
            if total <= 0.0 {
                return Err(Error::Config(format!(
                    "degenerate trajectory: all-zero weights in year {year}"
                )));
            }
        }
        Ok(())
    }

    fn all_words(&self) -> impl Iterator<Item = &WordDrift> {
        self.rising
            .iter()
            .chain(self.falling.iter())
            .chain(self.stable.iter())
    }

    pub fn labels(&self) -> TrendLabels {
        TrendLabels {
            rising: self.rising.iter().map(|w| w.word.clone()).collect(),
            falling: self.falling.iter().map(|w| w.word.clone()).collect(),
            stable: self.stable.iter().map(|w| w.word.clone()).collect(),
        }
    }

    /// The default corpus used by the acceptance experiments: 40 rising,
    /// 40 falling, 120 stable content words plus function-word templates,
    /// 8 years, 500 documents per year, 12-20 tokens per document.
    pub fn default_acceptance(seed: u64) -> Self {
        let rising = (0..40)
            .map(|i| WordDrift {
                word: format!("rise{i:02}"),
                trajectory: Trajectory::LogisticRise {
                    low: 0.05,
                    high: 4.0 + 0.05 * i as f64,
                    midpoint: 4.5 + 0.05 * (i % 5) as f64,
                    rate: 1.2,
                },
            })
            .collect();
        let falling = (0..40)
            .map(|i| WordDrift {
                word: format!("fall{i:02}"),
                trajectory: Trajectory::ExponentialDecay {
                    low: 0.05,
                    high: 4.0 + 0.05 * i as f64,
                    rate: 0.55,
                },
            })
            .collect();
        let stable = (0..120)
            .map(|i| WordDrift {
                word: format!("base{i:03}"),
                trajectory: Trajectory::Constant {
                    weight: 0.8 + 0.004 * i as f64,
                },
            })
            .collect();
        let templates = vec![
            "we study the {} of {} in {} .".into(),
            "this paper presents a {} for {} and {} .".into(),
            "the {} of {} with {} is {} .".into(),
            "a new {} to improve {} on {} .".into(),
            "results show that {} helps {} for {} .".into(),
            "we propose {} and evaluate {} against {} .".into(),
        ];
        DriftSpec {
            years: 8,
            docs_per_year: 500,
            doc_len_min: 12,
            doc_len_max: 20,
            rising,
            falling,
            stable,
            templates,
            seed,
        }
    }
}

/// Generate the corpus described by `spec`. Pure function of the spec
/// (seed included); years are generated from per-year derived seeds.
pub fn generate_drift_corpus(spec: &DriftSpec) -> Result<(TemporalCorpus, TrendLabels)> {
    spec.validate()?;
    let words: Vec<&WordDrift> = spec.all_words().collect();
    let mut docs = Vec::with_capacity(spec.years * spec.docs_per_year);
    for year in 1..=spec.years {
        let weights: Vec<f64> = words.iter().map(|w| w.trajectory.weight(year)).collect();
        let total: f64 = weights.iter().sum();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cumulative.push(acc);
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ (year as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for _ in 0..spec.docs_per_year {
            let target_len = rng.gen_range(spec.doc_len_min..=spec.doc_len_max);
            let mut tokens: Vec<String> = Vec::with_capacity(target_len + 8);
            while tokens.len() < target_len {
                let template = &spec.templates[rng.gen_range(0..spec.templates.len())];
                for part in template.split_whitespace() {
                    if part == "{}" {
                        let r: f64 = rng.gen();
                        let idx = cumulative.partition_point(|&c| c < r).min(words.len() - 1);
                        tokens.push(words[idx].word.clone());
                    } else {
                        tokens.push(part.to_string());
                    }
                }
            }
            docs.push(Document {
                year: year as i32,
                tokens: Vec::new(),
                raw_text: tokens.join(" "),
            });
        }
    }
    Ok((TemporalCorpus::from_documents(docs), spec.labels()))
}

/// Dump per-year counts and relative frequencies for the requested words.
/// Unknown words are listed with zero counts; returns warning messages.
pub fn export_frequency_csv(
    freq: &FrequencyTable,
    vocab: &Vocabulary,
    words: &[String],
    out: &mut impl Write,
) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    writeln!(out, "year,word,count,relative_frequency")?;
    for (&year, _) in &freq.counts {
        for w in words {
            let (count, rel) = match vocab.id(w) {
                Some(id) => {
                    let c = freq.count(year, id);
                    let total = freq.total(year);
                    let rel = if total > 0 {
                        c as f64 / total as f64
                    } else {
                        0.0
                    };
                    (c, rel)
                }
                None => (0, 0.0),
            };
            writeln!(out, "{year},{w},{count},{rel}")?;
        }
    }
    for w in words {
        if vocab.id(w).is_none() {
            warnings.push(format!("word {w:?} not in vocabulary, exported as zero"));
        }
    }
    Ok(warnings)
}
