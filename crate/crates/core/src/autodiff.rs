//! A small reverse-mode differentiation tape over [`Tensor`] values.
//!
//! Every forward computation in the model (attention, pooling, heads, loss)
//! is recorded here; `backward` then produces gradients for every node. The
//! same code path serves inference, so there is exactly one implementation of
//! each operator.

use crate::tensor::{order_invariant_sum, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Matrix product whose inner sums are order invariant.
    MatMulSorted(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Gelu(NodeId),
    Transpose(NodeId),
    Softmax(NodeId),
    LayerNorm(NodeId, Vec<f64>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    MeanRows(NodeId),
    /// Elementwise max; records which input won each element.
    MaxElementwise(Vec<NodeId>, Vec<usize>),
    /// Scalar max over selected flat indices; records the winning index.
    MaxOf(NodeId, usize),
    Bce(NodeId, Vec<f64>, f64),
    SumScalars(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<NodeId>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradients of the registered parameters, in registration order. Unused
    /// parameters get zero tensors.
    pub fn param_grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|&id| {
                self.grads[id.0].clone().unwrap_or_else(|| {
                    let (r, c) = tape.value(id).shape();
                    Tensor::zeros(r, c)
                })
            })
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    /// A leaf whose gradient is reported by [`Gradients::param_grads`].
    pub fn param(&mut self, t: Tensor) -> NodeId {
        let id = self.push(t, Op::Leaf);
        self.params.push(id);
        id
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.constant(Tensor::zeros(rows, cols))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b), false);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_sorted(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b), true);
        self.push(v, Op::MatMulSorted(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!(v.shape(), self.value(b).shape(), "add: shape mismatch");
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, v.cols()), r.shape(), "add_row: shape mismatch");
        let cols = v.cols();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += r.data()[i % cols];
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!(v.shape(), self.value(b).shape(), "mul: shape mismatch");
        for (x, y) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *x *= y;
        }
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x *= s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x = sigmoid(*x));
        self.push(v, Op::Sigmoid(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x = gelu(*x));
        self.push(v, Op::Gelu(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = transpose(self.value(a));
        self.push(v, Op::Transpose(a))
    }

    /// Row-wise softmax with an order-invariant normalizer.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let denom = order_invariant_sum(&mut exps.clone());
            for (c, e) in exps.iter().enumerate() {
                out.set(r, c, e / denom);
            }
        }
        self.push(out, Op::Softmax(a))
    }

    /// Row-wise normalization to zero mean and unit variance, no affine terms.
    pub fn layer_norm_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Tensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (c, v) in row.iter().enumerate() {
                out.set(r, c, (v - mean) * is);
            }
            inv_std.push(is);
        }
        self.push(out, Op::LayerNorm(a, inv_std))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let x = self.value(a);
        assert!(start + len <= x.cols(), "slice_cols: out of range");
        let mut out = Tensor::zeros(x.rows(), len);
        for r in 0..x.rows() {
            for c in 0..len {
                out.set(r, c, x.get(r, start + c));
            }
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.rows(), rows, "concat_cols: row mismatch");
            for r in 0..rows {
                for c in 0..x.cols() {
                    out.set(r, offset + c, x.get(r, c));
                }
            }
            offset += x.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Stacks `1 x c` (or `k x c`) nodes vertically.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.cols(), cols, "stack_rows: column mismatch");
            data.extend_from_slice(x.data());
            rows += x.rows();
        }
        let out = Tensor::from_vec(rows, cols, data).expect("stack_rows shape");
        self.push(out, Op::StackRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let x = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * x.cols());
        for &i in indices {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::from_vec(indices.len(), x.cols(), data).expect("gather shape");
        self.push(out, Op::GatherRows(a, indices.to_vec()))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut out = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                out.data_mut()[c] += x.get(r, c);
            }
        }
        let n = x.rows() as f64;
        out.data_mut().iter_mut().for_each(|v| *v /= n);
        self.push(out, Op::MeanRows(a))
    }

    /// Elementwise max over same-shape nodes. Ties go to the earliest input.
    pub fn max_elementwise(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = self.value(parts[0]).clone();
        let mut winner = vec![0usize; out.len()];
        for (k, p) in parts.iter().enumerate().skip(1) {
            let x = self.value(*p);
            assert_eq!(x.shape(), out.shape(), "max_elementwise: shape mismatch");
            for (i, v) in x.data().iter().enumerate() {
                if *v > out.data()[i] {
                    out.data_mut()[i] = *v;
                    winner[i] = k;
                }
            }
        }
        self.push(out, Op::MaxElementwise(parts.to_vec(), winner))
    }

    /// Scalar max over the given flat indices of `a`; the subgradient flows to
    /// the first maximal element.
    pub fn max_of(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let x = self.value(a);
        let best = indices
            .iter()
            .copied()
            .fold(None::<usize>, |best, i| match best {
                Some(b) if x.data()[b] >= x.data()[i] => Some(b),
                _ => Some(i),
            })
            .expect("max_of over empty index set");
        let out = Tensor::row_vector(vec![x.data()[best]]);
        self.push(out, Op::MaxOf(a, best))
    }

    /// Summed binary cross-entropy of probabilities `a` against `targets`,
    /// with inputs clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, a: NodeId, targets: &[f64], eps: f64) -> NodeId {
        let x = self.value(a);
        assert_eq!(x.len(), targets.len(), "bce: target length mismatch");
        let loss: f64 = x
            .data()
            .iter()
            .zip(targets)
            .map(|(p, t)| bce_term(*p, *t, eps))
            .sum();
        self.push(
            Tensor::row_vector(vec![loss]),
            Op::Bce(a, targets.to_vec(), eps),
        )
    }

    pub fn sum_scalars(&mut self, parts: &[NodeId]) -> NodeId {
        let total: f64 = parts.iter().map(|p| self.scalar(*p)).sum();
        self.push(
            Tensor::row_vector(vec![total]),
            Op::SumScalars(parts.to_vec()),
        )
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) | Op::MatMulSorted(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, matmul(&g, &transpose(bv), false));
                    accumulate(&mut grads, *b, matmul(&transpose(av), &g, false));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let mut rg = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            rg.data_mut()[c] += g.get(r, c);
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *row, rg);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |g, y| g * y);
                    let gb = zip_map(&g, self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let ga = map(&g, |v| v * s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| g * gelu_grad(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, transpose(&g)),
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm(a, inv_std) => {
                    let y = &node.value;
                    let n = y.cols() as f64;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let mean_g: f64 = (0..y.cols()).map(|c| g.get(r, c)).sum::<f64>() / n;
                        let mean_gy: f64 = (0..y.cols())
                            .map(|c| g.get(r, c) * y.get(r, c))
                            .sum::<f64>()
                            / n;
                        for c in 0..y.cols() {
                            let v = inv_std[r] * (g.get(r, c) - mean_g - y.get(r, c) * mean_gy);
                            ga.set(r, c, v);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(rows, cols);
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(r, start + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        let mut gp = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                gp.set(r, c, g.get(r, offset + c));
                            }
                        }
                        offset += cols;
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::StackRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        let start = row * cols;
                        let gp = Tensor::from_vec(
                            rows,
                            cols,
                            g.data()[start..start + rows * cols].to_vec(),
                        )
                        .expect("stack grad shape");
                        row += rows;
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::GatherRows(a, indices) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(rows, cols);
                    for (k, &i) in indices.iter().enumerate() {
                        for c in 0..cols {
                            let v = ga.get(i, c) + g.get(k, c);
                            ga.set(i, c, v);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            ga.set(r, c, g.data()[c] / rows as f64);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MaxElementwise(parts, winner) => {
                    for (k, p) in parts.iter().enumerate() {
                        let mut gp = g.clone();
                        for (i, v) in gp.data_mut().iter_mut().enumerate() {
                            if winner[i] != k {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::MaxOf(a, best) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(rows, cols);
                    ga.data_mut()[*best] = g.data()[0];
                    accumulate(&mut grads, *a, ga);
                }
                Op::Bce(a, targets, eps) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for (i, (p, t)) in x.data().iter().zip(targets).enumerate() {
                        ga.data_mut()[i] = g.data()[0] * bce_grad(*p, *t, *eps);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumScalars(parts) => {
                    for p in parts {
                        accumulate(&mut grads, *p, g.clone());
                    }
                }
            }
            grads[idx] = Some(g);
        }

        Gradients {
            grads,
            params: self.params.clone(),
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let mut out = a.clone();
    out.data_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x = f(*x, *y);
    }
    out
}

fn matmul(a: &Tensor, b: &Tensor, sorted: bool) -> Tensor {
    assert_eq!(a.cols(), b.rows(), "matmul: inner dimension mismatch");
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(n, m);
    if sorted {
        let mut terms = vec![0.0; k];
        for i in 0..n {
            for j in 0..m {
                for (t, term) in terms.iter_mut().enumerate() {
                    *term = a.get(i, t) * b.get(t, j);
                }
                out.set(i, j, order_invariant_sum(&mut terms));
            }
        }
    } else {
        let od = out.data_mut();
        for i in 0..n {
            for t in 0..k {
                let av = a.get(i, t);
                if av == 0.0 {
                    continue;
                }
                let brow = b.row(t);
                let orow = &mut od[i * m..(i + 1) * m];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

fn transpose(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols(), a.rows());
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            out.set(c, r, a.get(r, c));
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn bce_term(p: f64, t: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

fn bce_grad(p: f64, t: f64, eps: f64) -> f64 {
    if p < eps || p > 1.0 - eps {
        return 0.0;
    }
    (p - t) / (p * (1.0 - p))
}
