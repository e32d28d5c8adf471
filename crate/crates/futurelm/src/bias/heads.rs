//! Temporal bias heads. Each head turns the recent history of a word
//! (counts or year embeddings over a trailing window) into a logit offset
//! added before the softmax.

use crate::bias::year_embeddings::YearWordEmbeddings;
use crate::corpus::FrequencyTable;
use crate::error::{Error, Result};
use crate::numerics::{LstmCell, NodeId, ParamMap, ParamSet, Tape, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// External data a head reads at bias-build time.
#[derive(Clone, Copy, Default)]
pub struct HeadResources<'a> {
    pub freq: Option<&'a FrequencyTable>,
    pub embeddings: Option<&'a YearWordEmbeddings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum AlphaMode {
    /// Constant gate strength.
    Fixed(f64),
    /// Learned scalar, initialized at 1.
    Learned,
}

/// Per-word offset from the word's count history: an LSTM over
/// `log(1 + count)` inputs for the `window` preceding years, projected to
/// a scalar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyBiasHead {
    pub window: usize,
    pub hidden: usize,
    /// Emit a zero offset when the window reaches before recorded history
    /// instead of failing.
    pub fallback: bool,
}

impl Default for FrequencyBiasHead {
    fn default() -> Self {
        FrequencyBiasHead {
            window: 3,
            hidden: 16,
            fallback: true,
        }
    }
}

/// Per-word offset from the word's year-embedding history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextualBiasHead {
    pub window: usize,
    /// Dimension of the year embeddings (and of the LSTM state).
    pub dim: usize,
    pub fallback: bool,
}

/// Per-(position, word) offset: the word's projected history is gated by
/// the decoder state, so the same word can be promoted in one context and
/// not another.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatedBiasHead {
    pub window: usize,
    /// Must equal the decoder model dimension.
    pub dim: usize,
    pub alpha: AlphaMode,
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BiasHead {
    Frequency(FrequencyBiasHead),
    Contextual(ContextualBiasHead),
    /// Additive combination of the two per-word heads.
    FrequencyContextual {
        frequency: FrequencyBiasHead,
        contextual: ContextualBiasHead,
    },
    Gated(GatedBiasHead),
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).unwrap();
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

impl FrequencyBiasHead {
    fn lstm(&self) -> LstmCell {
        LstmCell::new("head.freq.lstm", 1, self.hidden)
    }

    fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        if self.window == 0 || self.hidden == 0 {
            return Err(Error::Config("frequency head window and hidden must be positive".into()));
        }
        self.lstm().init_params(ps, rng)?;
        ps.add("head.freq.a", normal(self.hidden, 1, 0.02, rng))
    }

    /// `1 x V` bias node for predictions in `year`, or `None` when history
    /// is insufficient and fallback is on.
    fn bias_node(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        freq: &FrequencyTable,
        year: i32,
        vocab_size: usize,
    ) -> Result<Option<NodeId>> {
        if freq.vocab_size != vocab_size {
            return Err(Error::Contract(format!(
                "frequency table vocabulary {} vs model vocabulary {vocab_size}",
                freq.vocab_size
            )));
        }
        let window_years: Vec<i32> = (year - self.window as i32..year).collect();
        if window_years.iter().any(|&y| !freq.has_year(y)) {
            if self.fallback {
                return Ok(None);
            }
            return Err(Error::State(format!(
                "no count history for the {} years before {year}",
                self.window
            )));
        }
        let inputs: Vec<NodeId> = window_years
            .iter()
            .map(|&y| {
                let col: Vec<f64> = (0..vocab_size as u32)
                    .map(|w| (freq.count(y, w) as f64).ln_1p())
                    .collect();
                tape.leaf(Tensor::col(col))
            })
            .collect::<Result<_>>()?;
        let h = self.lstm().run(tape, pm, &inputs)?;
        let b = tape.matmul(h, pm.id("head.freq.a"))?;
        Ok(Some(tape.transpose(b)?))
    }
}

impl ContextualBiasHead {
    fn lstm(&self) -> LstmCell {
        LstmCell::new("head.ctx.lstm", self.dim, self.dim)
    }

    fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        if self.window == 0 || self.dim == 0 {
            return Err(Error::Config("contextual head window and dim must be positive".into()));
        }
        self.lstm().init_params(ps, rng)?;
        ps.add("head.ctx.a", normal(self.dim, 1, 0.02, rng))
    }

    fn window_inputs(
        &self,
        tape: &mut Tape,
        emb: &YearWordEmbeddings,
        year: i32,
        vocab_size: usize,
        window: usize,
        fallback: bool,
    ) -> Result<Option<Vec<NodeId>>> {
        if emb.dim != self.dim {
            return Err(Error::Contract(format!(
                "year embeddings have dim {}, head expects {}",
                emb.dim, self.dim
            )));
        }
        let window_years: Vec<i32> = (year - window as i32..year).collect();
        if window_years.iter().any(|&y| !emb.covered(y)) {
            if fallback {
                return Ok(None);
            }
            return Err(Error::State(format!(
                "no year embeddings for the {window} years before {year}"
            )));
        }
        let inputs = window_years
            .iter()
            .map(|&y| tape.leaf(emb.year_matrix(y, vocab_size)))
            .collect::<Result<_>>()?;
        Ok(Some(inputs))
    }

    fn bias_node(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        emb: &YearWordEmbeddings,
        year: i32,
        vocab_size: usize,
    ) -> Result<Option<NodeId>> {
        let Some(inputs) =
            self.window_inputs(tape, emb, year, vocab_size, self.window, self.fallback)?
        else {
            return Ok(None);
        };
        let h = self.lstm().run(tape, pm, &inputs)?;
        let b = tape.matmul(h, pm.id("head.ctx.a"))?;
        Ok(Some(tape.transpose(b)?))
    }
}

impl GatedBiasHead {
    fn lstm(&self) -> LstmCell {
        LstmCell::new("head.gated.lstm", self.dim, self.dim)
    }

    fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        if self.window == 0 || self.dim == 0 {
            return Err(Error::Config("gated head window and dim must be positive".into()));
        }
        if let AlphaMode::Fixed(a) = self.alpha {
            if !a.is_finite() {
                return Err(Error::Config(format!("gate strength {a} is not finite")));
            }
        }
        self.lstm().init_params(ps, rng)?;
        ps.add("head.gated.a", normal(self.dim, 1, 0.02, rng))?;
        ps.add("head.gated.c", normal(self.dim, self.dim, 0.02, rng))?;
        ps.add("head.gated.d", normal(self.dim, self.dim, 0.02, rng))?;
        if matches!(self.alpha, AlphaMode::Learned) {
            ps.add("head.gated.alpha", Tensor::scalar(1.0))?;
        }
        Ok(())
    }

    /// Year-dependent factors shared by every position: the per-word
    /// history score `s_w` and the projected-history pieces. With
    /// `s_w = e_w . h_w` (embedding dot final LSTM state) the bias
    /// factorizes as `B[k][w] = alpha * sigmoid(u_k * s_w) * t_w * s_w`
    /// where `u = H (C a)` and `t = E (D a)`, so the cost per position is
    /// linear in the vocabulary.
    fn year_factors(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        emb: &YearWordEmbeddings,
        year: i32,
        emb_table: NodeId,
    ) -> Result<Option<GatedFactors>> {
        let vocab_size = tape.value(emb_table).rows();
        if tape.value(emb_table).cols() != self.dim {
            return Err(Error::Contract(format!(
                "gated head dim {} vs embedding table width {}",
                self.dim,
                tape.value(emb_table).cols()
            )));
        }
        let ctx = ContextualBiasHead {
            window: self.window,
            dim: self.dim,
            fallback: self.fallback,
        };
        let Some(inputs) =
            ctx.window_inputs(tape, emb, year, vocab_size, self.window, self.fallback)?
        else {
            return Ok(None);
        };
        let h = self.lstm().run(tape, pm, &inputs)?; // V x d
        let es = tape.mul(emb_table, h)?;
        let s = tape.row_sum(es)?; // V x 1, s_w = e_w . h_w
        let ca = tape.matmul(pm.id("head.gated.c"), pm.id("head.gated.a"))?; // d x 1
        let da = tape.matmul(pm.id("head.gated.d"), pm.id("head.gated.a"))?;
        let t = tape.matmul(emb_table, da)?; // V x 1
        let ts = tape.mul(t, s)?;
        Ok(Some(GatedFactors { s, ts, ca }))
    }

    /// `n x V` bias node for decoder states `hidden` (`n x d`).
    fn bias_node(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        emb: &YearWordEmbeddings,
        year: i32,
        hidden: NodeId,
        emb_table: NodeId,
    ) -> Result<Option<NodeId>> {
        let Some(f) = self.year_factors(tape, pm, emb, year, emb_table)? else {
            return Ok(None);
        };
        let u = tape.matmul(hidden, f.ca)?; // n x 1
        let st = tape.transpose(f.s)?; // 1 x V
        let gate = tape.matmul(u, st)?;
        let gate = tape.sigmoid(gate)?; // n x V
        let tst = tape.transpose(f.ts)?;
        let b = tape.mul_row(gate, tst)?;
        let b = match self.alpha {
            AlphaMode::Fixed(a) => tape.scale(b, a)?,
            AlphaMode::Learned => tape.scale_by(b, pm.id("head.gated.alpha"))?,
        };
        Ok(Some(b))
    }
}

struct GatedFactors {
    s: NodeId,
    ts: NodeId,
    ca: NodeId,
}

/// Year-dependent gated-head factors as plain values, for inference-time
/// caching: `B[k][w] = alpha * sigmoid((h_k . ca) * s[w]) * ts[w]`.
pub struct GatedFactorValues {
    pub s: Vec<f64>,
    pub ts: Vec<f64>,
    pub ca: Vec<f64>,
    pub alpha: f64,
}

impl GatedBiasHead {
    pub fn factor_values(
        &self,
        params: &ParamSet,
        emb: &YearWordEmbeddings,
        year: i32,
        emb_table: &Tensor,
    ) -> Result<Option<GatedFactorValues>> {
        let mut tape = Tape::new();
        let pm = params.leaf_all(&mut tape)?;
        let e_node = tape.leaf(emb_table.clone())?;
        let Some(f) = self.year_factors(&mut tape, &pm, emb, year, e_node)? else {
            return Ok(None);
        };
        let alpha = match self.alpha {
            AlphaMode::Fixed(a) => a,
            AlphaMode::Learned => params
                .get("head.gated.alpha")
                .ok_or_else(|| Error::State("learned gate scale missing from parameters".into()))?
                .scalar_value(),
        };
        Ok(Some(GatedFactorValues {
            s: tape.value(f.s).data().to_vec(),
            ts: tape.value(f.ts).data().to_vec(),
            ca: tape.value(f.ca).data().to_vec(),
            alpha,
        }))
    }
}

impl BiasHead {
    pub fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        match self {
            BiasHead::Frequency(h) => h.init_params(ps, rng),
            BiasHead::Contextual(h) => h.init_params(ps, rng),
            BiasHead::FrequencyContextual {
                frequency,
                contextual,
            } => {
                frequency.init_params(ps, rng)?;
                contextual.init_params(ps, rng)
            }
            BiasHead::Gated(h) => h.init_params(ps, rng),
        }
    }

    /// Whether the bias depends on the decoder state (per-position bias).
    pub fn needs_hidden(&self) -> bool {
        matches!(self, BiasHead::Gated(_))
    }

    fn freq_of<'a>(res: &HeadResources<'a>) -> Result<&'a FrequencyTable> {
        res.freq
            .ok_or_else(|| Error::State("bias head needs a frequency table".into()))
    }

    fn emb_of<'a>(res: &HeadResources<'a>) -> Result<&'a YearWordEmbeddings> {
        res.embeddings
            .ok_or_else(|| Error::State("bias head needs year embeddings".into()))
    }

    /// Position-independent `1 x V` bias for `year`; `None` means the
    /// zero-bias fallback applies. Not available for the gated head.
    pub fn static_bias(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        res: &HeadResources,
        year: i32,
        vocab_size: usize,
    ) -> Result<Option<NodeId>> {
        match self {
            BiasHead::Frequency(h) => h.bias_node(tape, pm, Self::freq_of(res)?, year, vocab_size),
            BiasHead::Contextual(h) => h.bias_node(tape, pm, Self::emb_of(res)?, year, vocab_size),
            BiasHead::FrequencyContextual {
                frequency,
                contextual,
            } => {
                let f = frequency.bias_node(tape, pm, Self::freq_of(res)?, year, vocab_size)?;
                let c = contextual.bias_node(tape, pm, Self::emb_of(res)?, year, vocab_size)?;
                match (f, c) {
                    (Some(f), Some(c)) => Ok(Some(tape.add(f, c)?)),
                    (Some(one), None) | (None, Some(one)) => Ok(Some(one)),
                    (None, None) => Ok(None),
                }
            }
            BiasHead::Gated(_) => Err(Error::Contract(
                "the gated head has no position-independent bias".into(),
            )),
        }
    }

    /// Position-dependent `n x V` bias for `year` given decoder states and
    /// the token-embedding table node. Gated head only.
    pub fn per_position_bias(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        res: &HeadResources,
        year: i32,
        hidden: NodeId,
        emb_table: NodeId,
    ) -> Result<Option<NodeId>> {
        match self {
            BiasHead::Gated(h) => {
                h.bias_node(tape, pm, Self::emb_of(res)?, year, hidden, emb_table)
            }
            _ => Err(Error::Contract(
                "only the gated head produces a per-position bias".into(),
            )),
        }
    }
}
