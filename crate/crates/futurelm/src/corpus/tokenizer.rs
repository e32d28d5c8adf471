//! Lowercased word-level tokenization: split on whitespace and
//! punctuation, keeping punctuation characters as their own tokens.

pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                word.push(lc);
            }
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Inverse of tokenization modulo whitespace normalization.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}
