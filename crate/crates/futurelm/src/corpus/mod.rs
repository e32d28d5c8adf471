//! Year-sliced corpus ingestion, vocabulary construction, frequency
//! tables, stopword curation, and year-based splits.

pub mod frequency;
pub mod ingest;
pub mod stopwords;
pub mod tokenizer;
pub mod vocab;

pub use frequency::{frequency_table, FrequencyTable};
pub use ingest::{ingest_bibtex, ingest_jsonl, IngestStats};
pub use stopwords::{curate_stopwords, StopwordList, StopwordSource};
pub use tokenizer::{detokenize, tokenize_words};
pub use vocab::{Vocabulary, EOS_TOKEN, UNK_TOKEN};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub year: i32,
    /// Token ids; empty until the corpus has been tokenized against a
    /// vocabulary.
    pub tokens: Vec<u32>,
    pub raw_text: String,
}

/// Documents grouped by integer year index. Years are stored strictly
/// increasing and contiguous; a year with no documents has an empty list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalCorpus {
    pub years: Vec<i32>,
    pub docs_by_year: BTreeMap<i32, Vec<Document>>,
    pub vocabulary: Option<Vocabulary>,
}

impl TemporalCorpus {
    pub fn empty() -> Self {
        TemporalCorpus {
            years: Vec::new(),
            docs_by_year: BTreeMap::new(),
            vocabulary: None,
        }
    }

    /// Group loose documents by year, filling year gaps so the year range
    /// stays contiguous.
    pub fn from_documents(docs: Vec<Document>) -> Self {
        if docs.is_empty() {
            return TemporalCorpus::empty();
        }
        let min = docs.iter().map(|d| d.year).min().unwrap();
        let max = docs.iter().map(|d| d.year).max().unwrap();
        let mut docs_by_year: BTreeMap<i32, Vec<Document>> =
            (min..=max).map(|y| (y, Vec::new())).collect();
        for d in docs {
            docs_by_year.get_mut(&d.year).unwrap().push(d);
        }
        TemporalCorpus {
            years: (min..=max).collect(),
            docs_by_year,
            vocabulary: None,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs_by_year.values().map(|v| v.len()).sum()
    }

    pub fn docs(&self) -> impl Iterator<Item = &Document> {
        self.docs_by_year.values().flatten()
    }

    pub fn is_tokenized(&self) -> bool {
        self.vocabulary.is_some()
    }

    /// Tokenize every document against `vocab`. Documents whose text
    /// yields no tokens are dropped; the count of dropped docs is
    /// returned.
    pub fn retokenize(&mut self, vocab: &Vocabulary) -> usize {
        let mut dropped = 0;
        for docs in self.docs_by_year.values_mut() {
            docs.retain_mut(|d| {
                d.tokens = vocab.encode(&d.raw_text);
                if d.tokens.is_empty() {
                    dropped += 1;
                    false
                } else {
                    true
                }
            });
        }
        self.vocabulary = Some(vocab.clone());
        dropped
    }

    /// Sub-corpus restricted to `years` (kept contiguous over their
    /// span), sharing this corpus's vocabulary.
    pub fn slice_years(&self, years: &BTreeSet<i32>) -> TemporalCorpus {
        let min = *years.iter().next().unwrap();
        let max = *years.iter().last().unwrap();
        let mut docs_by_year: BTreeMap<i32, Vec<Document>> =
            (min..=max).map(|y| (y, Vec::new())).collect();
        for (&y, docs) in &self.docs_by_year {
            if years.contains(&y) {
                docs_by_year.insert(y, docs.clone());
            }
        }
        TemporalCorpus {
            years: (min..=max).collect(),
            docs_by_year,
            vocabulary: self.vocabulary.clone(),
        }
    }
}

/// Rank words by corpus-wide frequency (lexicographic tie-break), keep the
/// top `max_size - 2` with count >= `min_count`, and prepend the specials.
/// Deterministic by construction.
pub fn build_vocab(corpus: &TemporalCorpus, max_size: usize, min_count: u64) -> Result<Vocabulary> {
    if corpus.doc_count() == 0 {
        return Err(Error::Config("cannot build vocabulary from empty corpus".into()));
    }
    if max_size < 3 {
        return Err(Error::Config(format!(
            "max vocabulary size {max_size} leaves no room beyond the 2 special tokens"
        )));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in corpus.docs() {
        for w in tokenize_words(&doc.raw_text) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - 2);

    let mut words = vec![EOS_TOKEN.to_string(), UNK_TOKEN.to_string()];
    words.extend(ranked.into_iter().map(|(w, _)| w));
    Ok(Vocabulary::from_words(words))
}

/// Partition a raw corpus into train/dev/test by year, building the shared
/// vocabulary from the train years only.
pub fn split_by_year(
    corpus: &TemporalCorpus,
    train_years: &BTreeSet<i32>,
    dev_year: i32,
    test_year: i32,
    max_vocab: usize,
    min_count: u64,
) -> Result<(TemporalCorpus, TemporalCorpus, TemporalCorpus)> {
    if train_years.is_empty() {
        return Err(Error::Config("empty train year set".into()));
    }
    if train_years.contains(&dev_year) || train_years.contains(&test_year) || dev_year == test_year
    {
        return Err(Error::Config(format!(
            "overlapping year sets: train {train_years:?}, dev {dev_year}, test {test_year}"
        )));
    }
    let max_train = *train_years.iter().last().unwrap();
    if dev_year <= max_train || test_year <= max_train {
        return Err(Error::Config(format!(
            "dev year {dev_year} and test year {test_year} must follow the last train year {max_train}"
        )));
    }
    let mut train = corpus.slice_years(train_years);
    let vocab = build_vocab(&train, max_vocab, min_count)?;
    train.retokenize(&vocab);
    let mut dev = corpus.slice_years(&BTreeSet::from([dev_year]));
    dev.retokenize(&vocab);
    let mut test = corpus.slice_years(&BTreeSet::from([test_year]));
    test.retokenize(&vocab);
    Ok((train, dev, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(year: i32, text: &str) -> Document {
        Document {
            year,
            tokens: Vec::new(),
            raw_text: text.to_string(),
        }
    }

    #[test]
    fn vocab_frequency_order_with_tie_break() {
        // {a:5, b:2} -> a before b; equal counts break lexicographically
        let corpus =
            TemporalCorpus::from_documents(vec![doc(1, "a a a a a b b"), doc(1, "d c c d")]);
        let v = build_vocab(&corpus, 10, 1).unwrap();
        assert_eq!(v.words(), &["</s>", "<unk>", "a", "b", "c", "d"]);
    }

    #[test]
    fn min_count_excludes_rare_words() {
        let corpus = TemporalCorpus::from_documents(vec![doc(1, "a a a a a b")]);
        let v = build_vocab(&corpus, 10, 2).unwrap();
        assert_eq!(v.id("b"), None);
        assert_eq!(v.encode("b"), vec![v.unk_id()]);
    }

    #[test]
    fn vocab_is_deterministic() {
        let corpus = TemporalCorpus::from_documents(vec![doc(1, "x y z z y x w")]);
        let a = build_vocab(&corpus, 10, 1).unwrap();
        let b = build_vocab(&corpus, 10, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn max_size_guard() {
        let corpus = TemporalCorpus::from_documents(vec![doc(1, "a")]);
        assert!(build_vocab(&corpus, 2, 1).is_err());
    }

    #[test]
    fn year_gaps_filled() {
        let corpus = TemporalCorpus::from_documents(vec![doc(2019, "a"), doc(2021, "b")]);
        assert_eq!(corpus.years, vec![2019, 2020, 2021]);
        assert!(corpus.docs_by_year[&2020].is_empty());
    }

    #[test]
    fn split_partitions_and_guards() {
        let docs: Vec<Document> = (1..=5).map(|y| doc(y, &format!("w{y} common"))).collect();
        let corpus = TemporalCorpus::from_documents(docs);
        let train_years: BTreeSet<i32> = [1, 2, 3].into();
        let (train, dev, test) = split_by_year(&corpus, &train_years, 4, 5, 50, 1).unwrap();
        assert_eq!(train.years, vec![1, 2, 3]);
        assert_eq!(dev.years, vec![4]);
        assert_eq!(test.years, vec![5]);
        // ordering guard
        assert!(split_by_year(&corpus, &train_years, 3, 5, 50, 1).is_err());
        assert!(split_by_year(&corpus, &train_years, 2, 5, 50, 1).is_err());
    }

    #[test]
    fn future_only_word_maps_to_unk() {
        let corpus = TemporalCorpus::from_documents(vec![
            doc(1, "seen words only"),
            doc(2, "seen again"),
            doc(3, "unseen futureword"),
        ]);
        let train_years: BTreeSet<i32> = [1].into();
        let (train, _dev, test) = split_by_year(&corpus, &train_years, 2, 3, 50, 1).unwrap();
        let vocab = train.vocabulary.as_ref().unwrap();
        assert!(vocab.id("futureword").is_none());
        let test_doc = &test.docs_by_year[&3][0];
        assert!(test_doc.tokens.contains(&vocab.unk_id()));
    }

    #[test]
    fn vocab_built_only_from_train_years() {
        let full = TemporalCorpus::from_documents(vec![
            doc(1, "alpha beta"),
            doc(2, "gamma"),
            doc(3, "delta"),
        ]);
        let trimmed = TemporalCorpus::from_documents(vec![doc(1, "alpha beta")]);
        let train_years: BTreeSet<i32> = [1].into();
        let (train_full, _, _) = split_by_year(&full, &train_years, 2, 3, 50, 1).unwrap();
        let vocab_trimmed = build_vocab(&trimmed, 50, 1).unwrap();
        assert_eq!(train_full.vocabulary.as_ref().unwrap(), &vocab_trimmed);
    }
}
