use crate::corpus::TemporalCorpus;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-year, per-word token counts over a fixed vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub vocab_size: usize,
    /// year -> counts indexed by word id (length `vocab_size`)
    pub counts: BTreeMap<i32, Vec<u64>>,
    pub totals: BTreeMap<i32, u64>,
}

impl FrequencyTable {
    pub fn count(&self, year: i32, word: u32) -> u64 {
        self.counts
            .get(&year)
            .map(|c| c[word as usize])
            .unwrap_or(0)
    }

    pub fn total(&self, year: i32) -> u64 {
        self.totals.get(&year).copied().unwrap_or(0)
    }

    pub fn has_year(&self, year: i32) -> bool {
        self.counts.contains_key(&year)
    }

    pub fn corpus_wide(&self, word: u32) -> u64 {
        self.counts.values().map(|c| c[word as usize]).sum()
    }

    /// Merge counts from another table over the same vocabulary.
    pub fn merge(&mut self, other: &FrequencyTable) -> Result<()> {
        if self.vocab_size != other.vocab_size {
            return Err(Error::Contract(format!(
                "frequency table merge: vocab {} vs {}",
                self.vocab_size, other.vocab_size
            )));
        }
        for (&year, counts) in &other.counts {
            let slot = self
                .counts
                .entry(year)
                .or_insert_with(|| vec![0; self.vocab_size]);
            for (a, b) in slot.iter_mut().zip(counts) {
                *a += b;
            }
            *self.totals.entry(year).or_insert(0) += other.totals[&year];
        }
        Ok(())
    }
}

/// Count token occurrences per (year, word). The corpus must already be
/// tokenized against its vocabulary.
pub fn frequency_table(corpus: &TemporalCorpus) -> Result<FrequencyTable> {
    let vocab = corpus
        .vocabulary
        .as_ref()
        .ok_or_else(|| Error::State("frequency_table on untokenized corpus".into()))?;
    let vocab_size = vocab.size();
    let mut counts = BTreeMap::new();
    let mut totals = BTreeMap::new();
    for (&year, docs) in &corpus.docs_by_year {
        let year_counts: &mut Vec<u64> = counts.entry(year).or_insert_with(|| vec![0; vocab_size]);
        let mut total = 0u64;
        for doc in docs {
            for &t in &doc.tokens {
                year_counts[t as usize] += 1;
                total += 1;
            }
        }
        totals.insert(year, total);
    }
    Ok(FrequencyTable {
        vocab_size,
        counts,
        totals,
    })
}
