//! Tape-based reverse-mode differentiation.
//!
//! Ops are recorded in topological order as they are built; `backward`
//! walks the tape in reverse and accumulates gradients additively, so a
//! parameter used several times receives the sum of its contributions.

use crate::error::{Error, Result};
use crate::numerics::tensor::{matmul, matmul_at, matmul_bt, Tensor};
use rand::Rng;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleByNode(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    MatmulTransB(NodeId, NodeId),
    Transpose(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Embed { table: NodeId, ids: Vec<u32> },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    Dropout { x: NodeId, mask: Vec<f64> },
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, len: usize },
    RowSum(NodeId),
    SoftmaxRows(NodeId),
    CausalSoftmaxRows(NodeId),
    SoftmaxCrossEntropy { logits: NodeId, targets: Vec<u32> },
}

struct Node {
    op: Op,
    value: Tensor,
}

pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of `id`, zeros if the node did not influence the loss.
    pub fn wrt(&self, id: NodeId, like: &Tensor) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => like.zeros_like(),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Enter a value onto the tape. Parameters and constant inputs alike;
    /// gradients accumulate for any leaf reachable from the loss.
    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::Numeric("non-finite value entering tape".into()));
        }
        Ok(self.push(Op::Leaf, value))
    }

    fn shapes(&self, a: NodeId, b: NodeId) -> (Vec<usize>, Vec<usize>) {
        (
            self.value(a).shape().to_vec(),
            self.value(b).shape().to_vec(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = self.shapes(a, b);
        if sa != sb {
            return Err(Error::Shape(format!("add: {sa:?} vs {sb:?}")));
        }
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), v))
    }

    /// `x (m x n) + r (1 x n)`, broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, r: NodeId) -> Result<NodeId> {
        let (sx, sr) = self.shapes(x, r);
        if sr[0] != 1 || sr[1] != sx[1] {
            return Err(Error::Shape(format!("add_row: {sx:?} vs {sr:?}")));
        }
        let xv = self.value(x);
        let rv = self.value(r).data();
        let n = xv.cols();
        let mut out = xv.clone();
        for i in 0..xv.rows() {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += rv[j];
            }
        }
        Ok(self.push(Op::AddRow(x, r), out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = self.shapes(a, b);
        if sa != sb {
            return Err(Error::Shape(format!("mul: {sa:?} vs {sb:?}")));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x * y)
            .collect();
        let v = Tensor::new(sa, data)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `x (m x n) * r (1 x n)` element-wise, broadcast over rows.
    pub fn mul_row(&mut self, x: NodeId, r: NodeId) -> Result<NodeId> {
        let (sx, sr) = self.shapes(x, r);
        if sr[0] != 1 || sr[1] != sx[1] {
            return Err(Error::Shape(format!("mul_row: {sx:?} vs {sr:?}")));
        }
        let xv = self.value(x);
        let rv = self.value(r).data();
        let n = xv.cols();
        let mut out = xv.clone();
        for i in 0..xv.rows() {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] *= rv[j];
            }
        }
        Ok(self.push(Op::MulRow(x, r), out))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(x).map(|a| a * c);
        Ok(self.push(Op::Scale(x, c), v))
    }

    /// Multiply by a scalar node (`1 x 1`), e.g. a learned gate scale.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.value(s).is_scalar() {
            return Err(Error::Shape(format!(
                "scale_by: scalar expected, got {:?}",
                self.value(s).shape()
            )));
        }
        let c = self.value(s).scalar_value();
        let v = self.value(x).map(|a| a * c);
        Ok(self.push(Op::ScaleByNode(x, s), v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = self.shapes(a, b);
        if sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul: {sa:?} vs {sb:?}")));
        }
        let v = matmul(self.value(a), self.value(b));
        Ok(self.push(Op::Matmul(a, b), v))
    }

    /// `a (m x k) * b^T` with `b (n x k)`. The tied-embedding logit path.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = self.shapes(a, b);
        if sa[1] != sb[1] {
            return Err(Error::Shape(format!("matmul_bt: {sa:?} vs {sb:?}^T")));
        }
        let v = matmul_bt(self.value(a), self.value(b));
        Ok(self.push(Op::MatmulTransB(a, b), v))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).transpose();
        Ok(self.push(Op::Transpose(x), v))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(|a| 1.0 / (1.0 + (-a).exp()));
        Ok(self.push(Op::Sigmoid(x), v))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(f64::tanh);
        Ok(self.push(Op::Tanh(x), v))
    }

    /// Gather rows of `table` by token id.
    pub fn embed(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let t = self.value(table);
        let (rows, d) = (t.rows(), t.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= rows) {
            return Err(Error::Contract(format!(
                "embedding lookup id {bad} out of range for table with {rows} rows"
            )));
        }
        let mut out = Tensor::zeros(ids.len(), d);
        for (k, &id) in ids.iter().enumerate() {
            out.data_mut()[k * d..(k + 1) * d].copy_from_slice(t.row_slice(id as usize));
        }
        Ok(self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            out,
        ))
    }

    /// Row-wise layer normalization with learned gain and bias (`1 x n`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        let (sg, sb) = self.shapes(gain, bias);
        if sg != vec![1, sx[1]] || sb != vec![1, sx[1]] {
            return Err(Error::Shape(format!(
                "layer_norm: x {sx:?}, gain {sg:?}, bias {sb:?}"
            )));
        }
        let xv = self.value(x);
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let n = xv.cols();
        let mut out = xv.clone();
        for i in 0..xv.rows() {
            let row = xv.row_slice(i);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = g[j] * (row[j] - mean) * inv + b[j];
            }
        }
        Ok(self.push(Op::LayerNorm { x, gain, bias }, out))
    }

    /// Inverted dropout. In evaluation mode this is the exact identity
    /// (no node is recorded).
    pub fn dropout(
        &mut self,
        x: NodeId,
        rate: f64,
        train: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0,1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let v = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { x, mask }, v))
    }

    /// Concatenate along columns; all inputs share the row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols: no inputs".into()));
        }
        let m = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            if self.value(p).rows() != m {
                return Err(Error::Shape(format!(
                    "concat_cols: row mismatch {} vs {}",
                    self.value(p).rows(),
                    m
                )));
            }
            total += self.value(p).cols();
        }
        let mut out = Tensor::zeros(m, total);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            let c = pv.cols();
            for i in 0..m {
                let dst = i * total + off;
                out.data_mut()[dst..dst + c].copy_from_slice(pv.row_slice(i));
            }
            off += c;
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice_cols: [{start}, {start}+{len}) out of {n} columns"
            )));
        }
        let mut out = Tensor::zeros(m, len);
        for i in 0..m {
            out.data_mut()[i * len..(i + 1) * len]
                .copy_from_slice(&xv.row_slice(i)[start..start + len]);
        }
        Ok(self.push(Op::SliceCols { x, start, len }, out))
    }

    /// Sum over columns: `m x n -> m x 1`.
    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let data = (0..xv.rows())
            .map(|i| xv.row_slice(i).iter().sum())
            .collect();
        Ok(self.push(Op::RowSum(x), Tensor::col(data)))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = softmax_forward(self.value(x), false);
        Ok(self.push(Op::SoftmaxRows(x), v))
    }

    /// Row-wise softmax with a causal mask: row `k` distributes mass over
    /// columns `0..=k` only. Requires a square input.
    pub fn causal_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.rows() != xv.cols() {
            return Err(Error::Shape(format!(
                "causal_softmax_rows: square input required, got {:?}",
                xv.shape()
            )));
        }
        let v = softmax_forward(xv, true);
        Ok(self.push(Op::CausalSoftmaxRows(x), v))
    }

    /// Mean negative log-likelihood (nats) of `targets` under row-wise
    /// softmax of `logits`. Scalar output.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &[u32]) -> Result<NodeId> {
        let lv = self.value(logits);
        if targets.len() != lv.rows() {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: {} logit rows vs {} targets",
                lv.rows(),
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t as usize >= lv.cols()) {
            return Err(Error::Contract(format!(
                "softmax_cross_entropy: target {bad} out of range for {} classes",
                lv.cols()
            )));
        }
        let probs = softmax_forward(lv, false);
        let n = targets.len();
        let mut nll = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            nll -= probs.get(i, t as usize).ln();
        }
        let v = Tensor::scalar(nll / n as f64);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            v,
        ))
    }

    /// Reverse-mode pass from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.scalar_value().is_finite() {
            return Err(Error::Numeric("backward on non-finite loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                Self::accum(grads, *a, g.clone());
                Self::accum(grads, *b, g.clone());
            }
            Op::AddRow(x, r) => {
                Self::accum(grads, *x, g.clone());
                Self::accum(grads, *r, col_sum(g));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                Self::accum(grads, *a, elem_mul(g, bv));
                Self::accum(grads, *b, elem_mul(g, av));
            }
            Op::MulRow(x, r) => {
                let xv = self.value(*x);
                let rv = self.value(*r);
                let n = xv.cols();
                let mut dx = g.clone();
                let mut dr = Tensor::zeros(1, n);
                for i in 0..xv.rows() {
                    for j in 0..n {
                        let gv = g.get(i, j);
                        dx.set(i, j, gv * rv.get(0, j));
                        dr.data_mut()[j] += gv * xv.get(i, j);
                    }
                }
                Self::accum(grads, *x, dx);
                Self::accum(grads, *r, dr);
            }
            Op::Scale(x, c) => {
                Self::accum(grads, *x, g.map(|v| v * c));
            }
            Op::ScaleByNode(x, s) => {
                let c = self.value(*s).scalar_value();
                let xv = self.value(*x);
                let ds: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                Self::accum(grads, *x, g.map(|v| v * c));
                Self::accum(grads, *s, Tensor::scalar(ds));
            }
            Op::Matmul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                Self::accum(grads, *a, matmul_bt(g, bv));
                Self::accum(grads, *b, matmul_at(av, g));
            }
            Op::MatmulTransB(a, b) => {
                // c = a b^T: da = g b, db = g^T a
                let av = self.value(*a);
                let bv = self.value(*b);
                Self::accum(grads, *a, matmul(g, bv));
                Self::accum(grads, *b, matmul_at(g, av));
            }
            Op::Transpose(x) => {
                Self::accum(grads, *x, g.transpose());
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, yv)| gv * yv * (1.0 - yv))
                    .collect();
                Self::accum(grads, *x, Tensor::new(y.shape().to_vec(), data).unwrap());
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, yv)| gv * (1.0 - yv * yv))
                    .collect();
                Self::accum(grads, *x, Tensor::new(y.shape().to_vec(), data).unwrap());
            }
            Op::Embed { table, ids } => {
                let tv = self.value(*table);
                let d = tv.cols();
                let mut dt = tv.zeros_like();
                for (k, &id) in ids.iter().enumerate() {
                    let dst = &mut dt.data_mut()[id as usize * d..(id as usize + 1) * d];
                    let src = g.row_slice(k);
                    for j in 0..d {
                        dst[j] += src[j];
                    }
                }
                Self::accum(grads, *table, dt);
            }
            Op::LayerNorm { x, gain, bias } => {
                let xv = self.value(*x);
                let gv = self.value(*gain).data().to_vec();
                let n = xv.cols();
                let nf = n as f64;
                let mut dx = xv.zeros_like();
                let mut dgain = Tensor::zeros(1, n);
                let mut dbias = Tensor::zeros(1, n);
                for i in 0..xv.rows() {
                    let row = xv.row_slice(i);
                    let mean = row.iter().sum::<f64>() / nf;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let grow = g.row_slice(i);
                    let mut dxhat = vec![0.0; n];
                    for j in 0..n {
                        dgain.data_mut()[j] += grow[j] * xhat[j];
                        dbias.data_mut()[j] += grow[j];
                        dxhat[j] = grow[j] * gv[j];
                    }
                    let mean_dxhat = dxhat.iter().sum::<f64>() / nf;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / nf;
                    let drow = &mut dx.data_mut()[i * n..(i + 1) * n];
                    for j in 0..n {
                        drow[j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                Self::accum(grads, *x, dx);
                Self::accum(grads, *gain, dgain);
                Self::accum(grads, *bias, dbias);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                Self::accum(grads, *x, Tensor::new(g.shape().to_vec(), data).unwrap());
            }
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    let mut dp = Tensor::zeros(m, c);
                    for i in 0..m {
                        let src = &g.row_slice(i)[off..off + c];
                        dp.data_mut()[i * c..(i + 1) * c].copy_from_slice(src);
                    }
                    Self::accum(grads, p, dp);
                    off += c;
                }
            }
            Op::SliceCols { x, start, len } => {
                let xv = self.value(*x);
                let mut dx = xv.zeros_like();
                let n = xv.cols();
                for i in 0..xv.rows() {
                    let dst = &mut dx.data_mut()[i * n + start..i * n + start + len];
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d += g.get(i, j);
                    }
                }
                Self::accum(grads, *x, dx);
            }
            Op::RowSum(x) => {
                let xv = self.value(*x);
                let n = xv.cols();
                let mut dx = xv.zeros_like();
                for i in 0..xv.rows() {
                    let gv = g.get(i, 0);
                    for j in 0..n {
                        dx.set(i, j, gv);
                    }
                }
                Self::accum(grads, *x, dx);
            }
            Op::SoftmaxRows(x) | Op::CausalSoftmaxRows(x) => {
                let y = &node.value;
                let n = y.cols();
                let mut dx = y.zeros_like();
                for i in 0..y.rows() {
                    let yrow = y.row_slice(i);
                    let grow = g.row_slice(i);
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    let drow = &mut dx.data_mut()[i * n..(i + 1) * n];
                    for j in 0..n {
                        drow[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                Self::accum(grads, *x, dx);
            }
            Op::SoftmaxCrossEntropy { logits, targets } => {
                let lv = self.value(*logits);
                let probs = softmax_forward(lv, false);
                let n = targets.len() as f64;
                let gv = g.scalar_value();
                let mut dl = probs;
                for (i, &t) in targets.iter().enumerate() {
                    let cur = dl.get(i, t as usize);
                    dl.set(i, t as usize, cur - 1.0);
                }
                let dl = dl.map(|v| v * gv / n);
                Self::accum(grads, *logits, dl);
            }
        }
    }
}

fn softmax_forward(x: &Tensor, causal: bool) -> Tensor {
    let (m, n) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        let row = x.row_slice(i);
        let limit = if causal { i + 1 } else { n };
        let max = row[..limit].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let orow = &mut out.data_mut()[i * n..(i + 1) * n];
        for j in 0..limit {
            let e = (row[j] - max).exp();
            orow[j] = e;
            sum += e;
        }
        for v in orow[..limit].iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn col_sum(x: &Tensor) -> Tensor {
    let n = x.cols();
    let mut out = Tensor::zeros(1, n);
    for i in 0..x.rows() {
        let row = x.row_slice(i);
        for j in 0..n {
            out.data_mut()[j] += row[j];
        }
    }
    out
}

fn elem_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}
