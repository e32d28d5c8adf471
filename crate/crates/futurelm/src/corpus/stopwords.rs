use crate::corpus::{FrequencyTable, Vocabulary};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopwordSource {
    ThresholdDerived,
    FileSupplied,
    Merged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopwordList {
    pub ids: BTreeSet<u32>,
    pub source: StopwordSource,
}

impl StopwordList {
    pub fn empty() -> Self {
        StopwordList {
            ids: BTreeSet::new(),
            source: StopwordSource::ThresholdDerived,
        }
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.contains(&id)
    }

    pub fn from_words(vocab: &Vocabulary, words: &[String]) -> (Self, Vec<String>) {
        let mut ids = BTreeSet::new();
        let mut warnings = Vec::new();
        for w in words {
            match vocab.id(w) {
                Some(id) => {
                    ids.insert(id);
                }
                None => warnings.push(format!("stopword {w:?} not in vocabulary, ignored")),
            }
        }
        (
            StopwordList {
                ids,
                source: StopwordSource::FileSupplied,
            },
            warnings,
        )
    }
}

/// Candidate stopwords are words whose corpus-wide count exceeds
/// `threshold`; the override file (`+word` / `-word` directives) then
/// force-includes or force-excludes individual words. Special tokens are
/// never candidates. Deterministic.
pub fn curate_stopwords(
    freq: &FrequencyTable,
    vocab: &Vocabulary,
    threshold: u64,
    override_lines: Option<&str>,
) -> Result<(StopwordList, Vec<String>)> {
    if threshold < 1 {
        return Err(Error::Config("stopword threshold must be >= 1".into()));
    }
    let mut ids: BTreeSet<u32> = (2..vocab.size() as u32)
        .filter(|&w| freq.corpus_wide(w) > threshold)
        .collect();
    let mut warnings = Vec::new();
    let mut source = StopwordSource::ThresholdDerived;
    if let Some(lines) = override_lines {
        source = StopwordSource::Merged;
        for (lineno, line) in lines.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (op, word) = line.split_at(1);
            match (op, vocab.id(word)) {
                ("+", Some(id)) => {
                    ids.insert(id);
                }
                ("-", Some(id)) => {
                    ids.remove(&id);
                }
                ("+", None) | ("-", None) => {
                    warnings.push(format!(
                        "override line {}: unknown word {word:?}, ignored",
                        lineno + 1
                    ));
                }
                _ => warnings.push(format!(
                    "override line {}: expected +word or -word, got {line:?}",
                    lineno + 1
                )),
            }
        }
    }
    Ok((StopwordList { ids, source }, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, frequency_table, Document, TemporalCorpus};

    fn fixture(word_counts: &[(&str, usize)]) -> (TemporalCorpus, Vocabulary, FrequencyTable) {
        let mut text = String::new();
        for (w, n) in word_counts {
            for _ in 0..*n {
                text.push_str(w);
                text.push(' ');
            }
        }
        let mut corpus = TemporalCorpus::from_documents(vec![Document {
            year: 1,
            tokens: Vec::new(),
            raw_text: text,
        }]);
        let vocab = build_vocab(&corpus, 1000, 1).unwrap();
        corpus.retokenize(&vocab);
        let freq = frequency_table(&corpus).unwrap();
        (corpus, vocab, freq)
    }

    #[test]
    fn threshold_cut() {
        let (_c, vocab, freq) = fixture(&[("the", 500), ("embedding", 90)]);
        let (sw, _) = curate_stopwords(&freq, &vocab, 100, None).unwrap();
        assert!(sw.contains(vocab.id("the").unwrap()));
        assert!(!sw.contains(vocab.id("embedding").unwrap()));
        assert_eq!(sw.source, StopwordSource::ThresholdDerived);
    }

    #[test]
    fn override_precedence() {
        let (_c, vocab, freq) = fixture(&[("the", 500), ("embedding", 90)]);
        let (sw, _) = curate_stopwords(&freq, &vocab, 100, Some("-the\n")).unwrap();
        assert!(sw.ids.is_empty());
        assert_eq!(sw.source, StopwordSource::Merged);
        let (sw2, _) = curate_stopwords(&freq, &vocab, 100, Some("+embedding\n")).unwrap();
        assert!(sw2.contains(vocab.id("embedding").unwrap()));
    }

    #[test]
    fn unknown_override_word_warns() {
        let (_c, vocab, freq) = fixture(&[("the", 500)]);
        let (sw, warnings) = curate_stopwords(&freq, &vocab, 100, Some("+nosuchword\n")).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(sw.ids.len(), 1);
    }

    #[test]
    fn twenty_word_ranked_fixture() {
        // 20 words with descending counts 200, 190, ..., 10
        let words: Vec<(String, usize)> = (0..20)
            .map(|i| (format!("w{i:02}"), (20 - i) * 10))
            .collect();
        let refs: Vec<(&str, usize)> = words.iter().map(|(w, n)| (w.as_str(), *n)).collect();
        let (_c, vocab, freq) = fixture(&refs);
        let (sw, _) = curate_stopwords(&freq, &vocab, 100, None).unwrap();
        // hand count: 200..110 > 100 (10 words); 100 itself is not > 100
        assert_eq!(sw.ids.len(), 10);
        for i in 0..10 {
            assert!(sw.contains(vocab.id(&format!("w{i:02}")).unwrap()));
        }
    }

    #[test]
    fn threshold_zero_rejected() {
        let (_c, vocab, freq) = fixture(&[("a", 5)]);
        assert!(curate_stopwords(&freq, &vocab, 0, None).is_err());
    }
}
