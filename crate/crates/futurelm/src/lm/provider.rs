use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A vocabulary-sized logit offset supplied at prediction time.
#[derive(Debug, Clone)]
pub enum Bias {
    /// No adjustment.
    Zero,
    /// One offset per word, shared by every position (frequency and
    /// contextual heads).
    Static(Vec<f64>),
    /// One offset per (position, word); rows follow the input positions
    /// (gated head).
    PerPosition(Tensor),
}

/// Source of logit offsets for a given prediction year. `hidden` carries
/// the decoder states for the current input, one row per position, which
/// position-dependent biases need.
pub trait BiasProvider {
    fn bias_for(&self, year: i32, hidden: &Tensor) -> Result<Bias>;
}

/// The plain language model: never biases anything.
pub struct ZeroBias;

impl BiasProvider for ZeroBias {
    fn bias_for(&self, _year: i32, _hidden: &Tensor) -> Result<Bias> {
        Ok(Bias::Zero)
    }
}

impl Bias {
    /// Offset for one position. `pos` indexes rows of a per-position bias.
    pub fn row(&self, pos: usize, vocab_size: usize) -> Result<Vec<f64>> {
        match self {
            Bias::Zero => Ok(vec![0.0; vocab_size]),
            Bias::Static(v) => {
                if v.len() != vocab_size {
                    return Err(Error::Contract(format!(
                        "bias length {} vs vocabulary {vocab_size}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
            Bias::PerPosition(t) => {
                if t.cols() != vocab_size {
                    return Err(Error::Contract(format!(
                        "bias width {} vs vocabulary {vocab_size}",
                        t.cols()
                    )));
                }
                if pos >= t.rows() {
                    return Err(Error::Contract(format!(
                        "bias row {pos} out of {} positions",
                        t.rows()
                    )));
                }
                Ok(t.row_slice(pos).to_vec())
            }
        }
    }
}
