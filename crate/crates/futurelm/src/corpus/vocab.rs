use crate::corpus::tokenizer::tokenize_words;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bijective word-id mapping with sequence-end and unknown specials at
/// fixed ids 0 and 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabWire", into = "VocabWire")]
pub struct Vocabulary {
    id_to_word: Vec<String>,
    word_to_id: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabWire {
    words: Vec<String>,
}

impl From<VocabWire> for Vocabulary {
    fn from(w: VocabWire) -> Self {
        Vocabulary::from_words(w.words)
    }
}

impl From<Vocabulary> for VocabWire {
    fn from(v: Vocabulary) -> Self {
        VocabWire {
            words: v.id_to_word,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.id_to_word == other.id_to_word
    }
}

impl Vocabulary {
    /// Build from a full word list that already starts with the specials.
    pub fn from_words(words: Vec<String>) -> Self {
        debug_assert!(words.len() >= 2 && words[0] == EOS_TOKEN && words[1] == UNK_TOKEN);
        let word_to_id = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary {
            id_to_word: words,
            word_to_id,
        }
    }

    pub const EOS_ID: u32 = 0;
    pub const UNK_ID: u32 = 1;

    pub fn eos_id(&self) -> u32 {
        Self::EOS_ID
    }

    pub fn unk_id(&self) -> u32 {
        Self::UNK_ID
    }

    pub fn size(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.word_to_id.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.id_to_word.get(id as usize).map(|s| s.as_str())
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_word
    }

    /// Tokenize text and map to ids; out-of-vocabulary words become unk.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize_words(text)
            .iter()
            .map(|w| self.id(w).unwrap_or(self.unk_id()))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.word(i).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_at_fixed_ids() {
        let v = Vocabulary::from_words(vec![
            EOS_TOKEN.into(),
            UNK_TOKEN.into(),
            "a".into(),
        ]);
        assert_eq!(v.eos_id(), 0);
        assert_eq!(v.unk_id(), 1);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.word(2), Some("a"));
    }

    #[test]
    fn oov_maps_to_unk() {
        let v = Vocabulary::from_words(vec![EOS_TOKEN.into(), UNK_TOKEN.into(), "a".into()]);
        assert_eq!(v.encode("a b"), vec![2, 1]);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::from_words(vec![EOS_TOKEN.into(), UNK_TOKEN.into(), "x".into()]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id("x"), Some(2));
    }
}
