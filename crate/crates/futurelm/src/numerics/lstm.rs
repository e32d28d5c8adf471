//! Single-layer LSTM cell on the tape, batched over rows.
//!
//! One cell's weights are shared across every row of the batch, which is
//! how the bias heads share their recurrence across word types.

use crate::error::Result;
use crate::numerics::params::{ParamMap, ParamSet};
use crate::numerics::tape::{NodeId, Tape};
use crate::numerics::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    prefix: String,
}

const GATES: [&str; 4] = ["i", "f", "g", "o"];

impl LstmCell {
    pub fn new(prefix: &str, input_dim: usize, hidden_dim: usize) -> Self {
        LstmCell {
            input_dim,
            hidden_dim,
            prefix: prefix.to_string(),
        }
    }

    fn name(&self, kind: &str, gate: &str) -> String {
        format!("{}.{kind}_{gate}", self.prefix)
    }

    pub fn init_params(&self, ps: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        let bound = 1.0 / (self.hidden_dim as f64).sqrt();
        for gate in GATES {
            ps.add(
                &self.name("wx", gate),
                uniform(self.input_dim, self.hidden_dim, bound, rng),
            )?;
            ps.add(
                &self.name("wh", gate),
                uniform(self.hidden_dim, self.hidden_dim, bound, rng),
            )?;
            // forget gate bias starts at 1
            let b0 = if gate == "f" { 1.0 } else { 0.0 };
            ps.add(
                &self.name("b", gate),
                Tensor::row(vec![b0; self.hidden_dim]),
            )?;
        }
        Ok(())
    }

    /// Set every cell weight and bias to the given constant. Test hook for
    /// hand-unrolled oracles.
    pub fn init_constant(&self, ps: &mut ParamSet, w: f64) -> Result<()> {
        for gate in GATES {
            ps.add(
                &self.name("wx", gate),
                Tensor::matrix(
                    self.input_dim,
                    self.hidden_dim,
                    vec![w; self.input_dim * self.hidden_dim],
                )?,
            )?;
            ps.add(
                &self.name("wh", gate),
                Tensor::matrix(
                    self.hidden_dim,
                    self.hidden_dim,
                    vec![w; self.hidden_dim * self.hidden_dim],
                )?,
            )?;
            ps.add(&self.name("b", gate), Tensor::row(vec![w; self.hidden_dim]))?;
        }
        Ok(())
    }

    fn gate(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        gate: &str,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        let xc = tape.matmul(x, pm.id(&self.name("wx", gate)))?;
        let hc = tape.matmul(h, pm.id(&self.name("wh", gate)))?;
        let pre = tape.add(xc, hc)?;
        tape.add_row(pre, pm.id(&self.name("b", gate)))
    }

    /// One LSTM step over a batch: `x (B x in)`, state `(h, c)` both
    /// `B x hidden`. Returns the new state.
    pub fn step(
        &self,
        tape: &mut Tape,
        pm: &ParamMap,
        x: NodeId,
        state: (NodeId, NodeId),
    ) -> Result<(NodeId, NodeId)> {
        let (h, c) = state;
        let pre_i = self.gate(tape, pm, "i", x, h)?;
        let i = tape.sigmoid(pre_i)?;
        let pre_f = self.gate(tape, pm, "f", x, h)?;
        let f = tape.sigmoid(pre_f)?;
        let pre_g = self.gate(tape, pm, "g", x, h)?;
        let g = tape.tanh(pre_g)?;
        let pre_o = self.gate(tape, pm, "o", x, h)?;
        let o = tape.sigmoid(pre_o)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_new = tape.add(fc, ig)?;
        let tc = tape.tanh(c_new)?;
        let h_new = tape.mul(o, tc)?;
        Ok((h_new, c_new))
    }

    /// Run the cell over a sequence of inputs from a zero state and return
    /// the final hidden node (`B x hidden`).
    pub fn run(&self, tape: &mut Tape, pm: &ParamMap, inputs: &[NodeId]) -> Result<NodeId> {
        assert!(!inputs.is_empty());
        let batch = tape.value(inputs[0]).rows();
        let h0 = tape.leaf(Tensor::zeros(batch, self.hidden_dim))?;
        let c0 = tape.leaf(Tensor::zeros(batch, self.hidden_dim))?;
        let mut state = (h0, c0);
        for &x in inputs {
            state = self.step(tape, pm, x, state)?;
        }
        Ok(state.0)
    }
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}
