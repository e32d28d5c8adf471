//! Corpus ingestion from JSONL and bibliography files.

use crate::corpus::{Document, TemporalCorpus};
use crate::error::{Error, Result};
use std::io::{BufRead, BufReader};
use std::path::Path;

#[derive(Debug, Default, Clone, Copy)]
pub struct IngestStats {
    pub documents: usize,
    /// Lines/entries skipped because of missing fields or parse failures.
    pub skipped: usize,
    /// Entries dropped by the English character-ratio heuristic.
    pub dropped_non_english: usize,
}

/// One record per line with a `text` field and an integer year field.
pub fn ingest_jsonl(path: &Path, year_field: &str) -> Result<(TemporalCorpus, IngestStats)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Ingest(format!("cannot read {}: {e}", path.display())))?;
    let mut stats = IngestStats::default();
    let mut docs = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => {
                stats.skipped += 1;
                continue;
            }
        };
        let text = value.get("text").and_then(|v| v.as_str());
        let year = value.get(year_field).and_then(serde_json::Value::as_i64);
        match (text, year) {
            (Some(t), Some(y)) => {
                docs.push(Document {
                    year: y as i32,
                    tokens: Vec::new(),
                    raw_text: t.to_string(),
                });
                stats.documents += 1;
            }
            _ => stats.skipped += 1,
        }
    }
    Ok((TemporalCorpus::from_documents(docs), stats))
}

/// Fraction of alphabetic characters that fall in the ASCII range must be
/// at least 0.9 for an entry to count as English.
fn is_english(text: &str) -> bool {
    let mut alpha = 0usize;
    let mut ascii = 0usize;
    for ch in text.chars() {
        if ch.is_alphabetic() {
            alpha += 1;
            if ch.is_ascii() {
                ascii += 1;
            }
        }
    }
    alpha == 0 || (ascii as f64) / (alpha as f64) >= 0.9
}

/// Bibliography entries carrying both `abstract` and `year` fields become
/// documents; everything else is skipped with a warning count.
pub fn ingest_bibtex(path: &Path) -> Result<(TemporalCorpus, IngestStats)> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::Ingest(format!("cannot read {}: {e}", path.display())))?;
    let mut stats = IngestStats::default();
    let mut docs = Vec::new();
    for entry in parse_bibtex_entries(&content) {
        let abstract_text = entry.fields.iter().find(|(k, _)| k == "abstract");
        let year = entry
            .fields
            .iter()
            .find(|(k, _)| k == "year")
            .and_then(|(_, v)| v.trim().parse::<i32>().ok());
        match (abstract_text, year) {
            (Some((_, text)), Some(y)) => {
                if !is_english(text) {
                    stats.dropped_non_english += 1;
                    continue;
                }
                docs.push(Document {
                    year: y,
                    tokens: Vec::new(),
                    raw_text: text.clone(),
                });
                stats.documents += 1;
            }
            _ => stats.skipped += 1,
        }
    }
    Ok((TemporalCorpus::from_documents(docs), stats))
}

struct BibEntry {
    fields: Vec<(String, String)>,
}

/// Minimal bibliography parser: `@type{key, name = {value}, ...}` with
/// brace nesting and quoted values. Unparseable entries are dropped.
fn parse_bibtex_entries(content: &str) -> Vec<BibEntry> {
    let chars: Vec<char> = content.chars().collect();
    let mut entries = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '@' {
            i += 1;
            continue;
        }
        // skip entry type up to the opening brace
        while i < chars.len() && chars[i] != '{' {
            i += 1;
        }
        if i >= chars.len() {
            break;
        }
        i += 1; // past '{'
        // skip citation key
        while i < chars.len() && chars[i] != ',' && chars[i] != '}' {
            i += 1;
        }
        let mut fields = Vec::new();
        while i < chars.len() && chars[i] != '}' {
            i += 1; // past ',' or whitespace
            while i < chars.len() && (chars[i].is_whitespace() || chars[i] == ',') {
                i += 1;
            }
            if i >= chars.len() || chars[i] == '}' {
                break;
            }
            let mut name = String::new();
            while i < chars.len() && chars[i] != '=' && chars[i] != '}' {
                name.push(chars[i]);
                i += 1;
            }
            if i >= chars.len() || chars[i] != '=' {
                break;
            }
            i += 1;
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            let mut value = String::new();
            if i < chars.len() && chars[i] == '{' {
                let mut depth = 1;
                i += 1;
                while i < chars.len() && depth > 0 {
                    match chars[i] {
                        '{' => depth += 1,
                        '}' => depth -= 1,
                        _ => {}
                    }
                    if depth > 0 {
                        value.push(chars[i]);
                    }
                    i += 1;
                }
            } else if i < chars.len() && chars[i] == '"' {
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    value.push(chars[i]);
                    i += 1;
                }
                i += 1;
            } else {
                while i < chars.len() && chars[i] != ',' && chars[i] != '}' {
                    value.push(chars[i]);
                    i += 1;
                }
            }
            fields.push((name.trim().to_lowercase(), value));
        }
        if i < chars.len() && chars[i] == '}' {
            i += 1;
        }
        entries.push(BibEntry { fields });
    }
    entries
}
