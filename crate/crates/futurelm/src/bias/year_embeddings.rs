//! Per-year word-type embeddings: for each year slice, a word's vector is
//! the average of the contextual encoder states at every occurrence of the
//! word in that year's documents.

use crate::corpus::TemporalCorpus;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

/// Produces one contextual vector per token position of a document,
/// specific to the document's year slice.
pub trait YearEncoder {
    fn dim(&self) -> usize;
    /// `n x dim` matrix of contextual states, row per token of `tokens`.
    fn encode(&self, year: i32, tokens: &[u32]) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearWordEmbeddings {
    pub dim: usize,
    /// Years that were processed, including years where no word occurred.
    pub years: BTreeSet<i32>,
    vectors: BTreeMap<(i32, u32), Vec<f64>>,
    occurrences: BTreeMap<(i32, u32), u64>,
}

impl YearWordEmbeddings {
    pub fn new(dim: usize) -> Self {
        YearWordEmbeddings {
            dim,
            years: BTreeSet::new(),
            vectors: BTreeMap::new(),
            occurrences: BTreeMap::new(),
        }
    }

    pub fn covered(&self, year: i32) -> bool {
        self.years.contains(&year)
    }

    /// Averaged vector for `(year, word)`; `None` when the word never
    /// occurred in that year.
    pub fn get(&self, year: i32, word: u32) -> Option<&[f64]> {
        self.vectors.get(&(year, word)).map(|v| v.as_slice())
    }

    pub fn occurrences(&self, year: i32, word: u32) -> u64 {
        self.occurrences.get(&(year, word)).copied().unwrap_or(0)
    }

    pub fn entry_count(&self) -> usize {
        self.vectors.len()
    }

    /// `V x dim` matrix for one year; rows of absent words are zero.
    pub fn year_matrix(&self, year: i32, vocab_size: usize) -> Tensor {
        let mut out = Tensor::zeros(vocab_size, self.dim);
        for (&(y, w), vec) in self.vectors.range((year, 0)..=(year, u32::MAX)) {
            debug_assert_eq!(y, year);
            out.data_mut()[w as usize * self.dim..(w as usize + 1) * self.dim]
                .copy_from_slice(vec);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(MAGIC)?;
        f.write_all(&FORMAT_VERSION.to_le_bytes())?;
        f.write_all(&(self.dim as u32).to_le_bytes())?;
        f.write_all(&(self.years.len() as u32).to_le_bytes())?;
        for &y in &self.years {
            f.write_all(&y.to_le_bytes())?;
        }
        f.write_all(&(self.vectors.len() as u64).to_le_bytes())?;
        for (&(y, w), vec) in &self.vectors {
            f.write_all(&y.to_le_bytes())?;
            f.write_all(&w.to_le_bytes())?;
            f.write_all(&self.occurrences[&(y, w)].to_le_bytes())?;
            for &v in vec {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)
            .map_err(|_| Error::Format("embedding file too short".into()))?;
        if magic != *MAGIC {
            return Err(Error::Format("not a year-embedding file".into()));
        }
        let version = read_u32(&mut f)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "embedding format version {version} unsupported (expected {FORMAT_VERSION})"
            )));
        }
        let dim = read_u32(&mut f)? as usize;
        let nyears = read_u32(&mut f)?;
        let mut years = BTreeSet::new();
        for _ in 0..nyears {
            years.insert(read_i32(&mut f)?);
        }
        let count = read_u64(&mut f)?;
        let mut vectors = BTreeMap::new();
        let mut occurrences = BTreeMap::new();
        for _ in 0..count {
            let y = read_i32(&mut f)?;
            let w = read_u32(&mut f)?;
            let occ = read_u64(&mut f)?;
            let mut vec = vec![0.0; dim];
            for v in vec.iter_mut() {
                let mut b = [0u8; 8];
                f.read_exact(&mut b)
                    .map_err(|_| Error::Format("truncated embedding file".into()))?;
                *v = f64::from_le_bytes(b);
            }
            vectors.insert((y, w), vec);
            occurrences.insert((y, w), occ);
        }
        Ok(YearWordEmbeddings {
            dim,
            years,
            vectors,
            occurrences,
        })
    }
}

const MAGIC: &[u8; 8] = b"FLMEMB\0\0";
const FORMAT_VERSION: u32 = 1;

fn read_u32(f: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    f.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated embedding file".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32(f: &mut impl Read) -> Result<i32> {
    let mut b = [0u8; 4];
    f.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated embedding file".into()))?;
    Ok(i32::from_le_bytes(b))
}

fn read_u64(f: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    f.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated embedding file".into()))?;
    Ok(u64::from_le_bytes(b))
}

/// Average the encoder's contextual states per (year, word) over the given
/// years of the corpus.
pub fn build_year_embeddings(
    corpus: &TemporalCorpus,
    encoder: &dyn YearEncoder,
    years: &[i32],
) -> Result<YearWordEmbeddings> {
    if !corpus.is_tokenized() {
        return Err(Error::State("year embeddings need a tokenized corpus".into()));
    }
    let dim = encoder.dim();
    let mut out = YearWordEmbeddings::new(dim);
    let mut sums: BTreeMap<(i32, u32), Vec<f64>> = BTreeMap::new();
    for &year in years {
        out.years.insert(year);
        let Some(docs) = corpus.docs_by_year.get(&year) else {
            continue;
        };
        for doc in docs {
            let states = encoder.encode(year, &doc.tokens)?;
            if states.rows() != doc.tokens.len() || states.cols() != dim {
                return Err(Error::Contract(format!(
                    "encoder produced {:?} for a {}-token document (dim {dim})",
                    states.shape(),
                    doc.tokens.len()
                )));
            }
            for (pos, &w) in doc.tokens.iter().enumerate() {
                let sum = sums
                    .entry((year, w))
                    .or_insert_with(|| vec![0.0; dim]);
                for (s, v) in sum.iter_mut().zip(states.row_slice(pos)) {
                    *s += v;
                }
                *out.occurrences.entry((year, w)).or_insert(0) += 1;
            }
        }
    }
    for ((year, w), mut sum) in sums {
        let n = out.occurrences[&(year, w)] as f64;
        for v in sum.iter_mut() {
            *v /= n;
        }
        out.vectors.insert((year, w), sum);
    }
    Ok(out)
}
