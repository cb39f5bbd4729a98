//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! Operations are appended to a [`Graph`] during the forward pass; every
//! node only refers to nodes recorded before it, so the tape is acyclic by
//! construction. [`Graph::backward`] replays the tape in reverse and returns
//! the gradient of a scalar root with respect to every parameter leaf.

use std::collections::BTreeMap;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Parameter,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Elu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Square(Var),
    SoftmaxGroups(Var, usize),
    LogSoftmaxGroups(Var, usize),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SumAll(Var),
    SumCols(Var),
    RepeatRows(Var, usize),
    MeanRowGroups(Var, usize),
    StraightThrough(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    GroupedAttention { q: Var, k: Var, v: Var, group: usize, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar root with respect to the parameter leaves.
#[derive(Debug, Default)]
pub struct Gradients {
    by_var: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.by_var.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.by_var.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.by_var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_var.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.by_var.iter().map(|(v, t)| (*v, t))
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every node recorded after the first `len`. Handles to dropped
    /// nodes must not be used again.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let id = self.nodes.len();
        debug_assert!(inputs.iter().all(|v| v.0 < id));
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(id)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        self.push(value, op, &[x])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).dims2(),
            self.value(b).dims2(),
            "{what}: shape mismatch {:?} vs {:?}",
            self.value(a).shape(),
            self.value(b).shape()
        );
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, &[])
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn parameter(&mut self, t: Tensor) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { value: t, op: Op::Parameter, needs_grad: true });
        Var(id)
    }

    /// Same value, no gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let t = self.value(x).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        self.push(Tensor::new(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    /// `x[m,n] + row[1,n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (m, n) = self.value(x).dims2();
        assert_eq!(self.value(row).dims2(), (1, n), "add_row: bias shape");
        let r = self.value(row).data();
        let mut out = self.value(x).data().to_vec();
        for chunk in out.chunks_mut(n) {
            for (o, b) in chunk.iter_mut().zip(r) {
                *o += b;
            }
        }
        self.push(Tensor::new(vec![m, n], out), Op::AddRow(x, row), &[x, row])
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Var {
        self.same_shape(a, b, what);
        let (m, n) = self.value(a).dims2();
        let out = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        self.push(Tensor::new(vec![m, n], out), op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, f64::min, Op::Minimum(a, b), "minimum")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v + s, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { v.exp_m1() }, Op::Elu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// Natural log; inputs must be positive.
    pub fn ln(&mut self, x: Var) -> Var {
        debug_assert!(self.value(x).data().iter().all(|&v| v > 0.0), "ln of non-positive value");
        self.unary(x, f64::ln, Op::Log(x))
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    fn check_groups(&self, x: Var, group: usize, what: &str) {
        let t = self.value(x);
        assert!(group > 0 && t.cols() % group == 0, "{what}: {} columns not divisible by {group}", t.cols());
        assert!(t.is_finite(), "{what}: non-finite logits");
    }

    /// Softmax over consecutive groups of `group` columns in each row.
    pub fn softmax_groups(&mut self, x: Var, group: usize) -> Var {
        self.check_groups(x, group, "softmax");
        let mut out = self.value(x).data().to_vec();
        for g in out.chunks_mut(group) {
            softmax_in_place(g);
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out), Op::SoftmaxGroups(x, group), &[x])
    }

    pub fn log_softmax_groups(&mut self, x: Var, group: usize) -> Var {
        self.check_groups(x, group, "log_softmax");
        let mut out = self.value(x).data().to_vec();
        for g in out.chunks_mut(group) {
            let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + g.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            g.iter_mut().for_each(|v| *v -= lse);
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out), Op::LogSoftmaxGroups(x, group), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), m, "concat_cols: row mismatch");
                self.value(p).cols()
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::new(vec![m, n], out), Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.value(x).dims2();
        assert!(len > 0 && start + len <= n, "slice_cols out of range");
        let t = self.value(x);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&t.row(r)[start..start + len]);
        }
        self.push(Tensor::new(vec![m, len], out), Op::SliceCols(x, start), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    /// Row-wise sum, `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (m, n) = self.value(x).dims2();
        let out = self.value(x).data().chunks(n).map(|r| r.iter().sum()).collect();
        self.push(Tensor::new(vec![m, 1], out), Op::SumCols(x), &[x])
    }

    /// Each row repeated `times` times consecutively.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let (m, n) = self.value(x).dims2();
        let mut out = Vec::with_capacity(m * n * times);
        for r in 0..m {
            for _ in 0..times {
                out.extend_from_slice(self.value(x).row(r));
            }
        }
        self.push(Tensor::new(vec![m * times, n], out), Op::RepeatRows(x, times), &[x])
    }

    /// Mean over consecutive groups of `group` rows, `[g*group, n] -> [g, n]`.
    pub fn mean_row_groups(&mut self, x: Var, group: usize) -> Var {
        let (m, n) = self.value(x).dims2();
        assert!(group > 0 && m % group == 0, "mean_row_groups: {m} rows not divisible by {group}");
        let t = self.value(x);
        let mut out = vec![0.0; (m / group) * n];
        for r in 0..m {
            let o = &mut out[(r / group) * n..(r / group + 1) * n];
            for (a, b) in o.iter_mut().zip(t.row(r)) {
                *a += b / group as f64;
            }
        }
        self.push(Tensor::new(vec![m / group, n], out), Op::MeanRowGroups(x, group), &[x])
    }

    /// Forward value `sample`; backward passes the incoming gradient to
    /// `probs` unchanged (`probs + stop_grad(sample - probs)`).
    pub fn straight_through(&mut self, probs: Var, sample: Tensor) -> Var {
        assert_eq!(self.value(probs).dims2(), sample.dims2(), "straight_through: shape");
        self.push(sample, Op::StraightThrough(probs), &[probs])
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    /// Scaled dot-product attention inside consecutive blocks of `group`
    /// rows: for each block, `softmax(q kᵀ / sqrt(d)) v`.
    pub fn grouped_attention(&mut self, q: Var, k: Var, v: Var, group: usize) -> Var {
        let (m, d) = self.value(q).dims2();
        assert_eq!(self.value(k).dims2(), (m, d), "attention: key shape");
        let (mv, dv) = self.value(v).dims2();
        assert_eq!(mv, m, "attention: value rows");
        assert!(group > 0 && m % group == 0, "attention: rows not divisible by group");
        let scale = 1.0 / (d as f64).sqrt();
        let (qt, kt, vt) = (self.value(q), self.value(k), self.value(v));
        let mut weights = vec![0.0; m * group];
        let mut out = vec![0.0; m * dv];
        for blk in 0..m / group {
            let base = blk * group;
            for i in 0..group {
                let w = &mut weights[(base + i) * group..(base + i + 1) * group];
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj = dot(qt.row(base + i), kt.row(base + j)) * scale;
                }
                softmax_in_place(w);
                let o = &mut out[(base + i) * dv..(base + i + 1) * dv];
                for (j, wj) in w.iter().enumerate() {
                    for (oo, vv) in o.iter_mut().zip(vt.row(base + j)) {
                        *oo += wj * vv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![m, dv], out);
        self.push(value, Op::GroupedAttention { q, k, v, group, weights }, &[q, k, v])
    }

    /// Reverse pass from a scalar `root`. Returns gradients for every
    /// parameter leaf reachable from it; constants are never touched.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        let mut out = Gradients::default();
        if !self.nodes[root.0].needs_grad {
            return Ok(out);
        }
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if let Op::Parameter = node.op {
                out.by_var.insert(Var(id), Tensor::new(node.value.shape().to_vec(), g));
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn accumulate_elementwise(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], d: impl Fn(usize, f64) -> f64) {
        self.accumulate(grads, v, |s| {
            for (i, (si, gi)) in s.iter_mut().zip(g).enumerate() {
                *si += d(i, *gi);
            }
        });
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Constant | Op::Parameter => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).cols();
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |s| gemm(m, n, k, g, false, bv, true, s, true));
                self.accumulate(grads, *b, |s| gemm(k, m, n, av, true, g, false, s, true));
            }
            Op::AddRow(x, row) => {
                self.accumulate_elementwise(grads, *x, g, |_, gi| gi);
                let n = self.value(*row).cols();
                self.accumulate(grads, *row, |s| {
                    for chunk in g.chunks(n) {
                        for (si, gi) in s.iter_mut().zip(chunk) {
                            *si += gi;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate_elementwise(grads, *a, g, |_, gi| gi);
                self.accumulate_elementwise(grads, *b, g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                self.accumulate_elementwise(grads, *a, g, |_, gi| gi);
                self.accumulate_elementwise(grads, *b, g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate_elementwise(grads, *a, g, |i, gi| gi * bv[i]);
                self.accumulate_elementwise(grads, *b, g, |i, gi| gi * av[i]);
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate_elementwise(grads, *a, g, |i, gi| if av[i] <= bv[i] { gi } else { 0.0 });
                self.accumulate_elementwise(grads, *b, g, |i, gi| if av[i] <= bv[i] { 0.0 } else { gi });
            }
            Op::Scale(x, s) => self.accumulate_elementwise(grads, *x, g, |_, gi| gi * s),
            Op::AddScalar(x) => self.accumulate_elementwise(grads, *x, g, |_, gi| gi),
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate_elementwise(grads, *x, g, |i, gi| if xv[i] > 0.0 { gi } else { 0.0 });
            }
            Op::Elu(x) => {
                let xv = self.value(*x).data();
                self.accumulate_elementwise(grads, *x, g, |i, gi| if xv[i] > 0.0 { gi } else { gi * (y[i] + 1.0) });
            }
            Op::Sigmoid(x) => self.accumulate_elementwise(grads, *x, g, |i, gi| gi * y[i] * (1.0 - y[i])),
            Op::Tanh(x) => self.accumulate_elementwise(grads, *x, g, |i, gi| gi * (1.0 - y[i] * y[i])),
            Op::Exp(x) => self.accumulate_elementwise(grads, *x, g, |i, gi| gi * y[i]),
            Op::Log(x) => {
                let xv = self.value(*x).data();
                self.accumulate_elementwise(grads, *x, g, |i, gi| gi / xv[i]);
            }
            Op::Softplus(x) => {
                let xv = self.value(*x).data();
                self.accumulate_elementwise(grads, *x, g, |i, gi| gi * sigmoid(xv[i]));
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                self.accumulate_elementwise(grads, *x, g, |i, gi| 2.0 * gi * xv[i]);
            }
            Op::SoftmaxGroups(x, group) => {
                self.accumulate(grads, *x, |s| {
                    for ((sg, gg), yg) in s.chunks_mut(*group).zip(g.chunks(*group)).zip(y.chunks(*group)) {
                        let inner: f64 = gg.iter().zip(yg).map(|(a, b)| a * b).sum();
                        for ((si, gi), yi) in sg.iter_mut().zip(gg).zip(yg) {
                            *si += yi * (gi - inner);
                        }
                    }
                });
            }
            Op::LogSoftmaxGroups(x, group) => {
                self.accumulate(grads, *x, |s| {
                    for ((sg, gg), yg) in s.chunks_mut(*group).zip(g.chunks(*group)).zip(y.chunks(*group)) {
                        let total: f64 = gg.iter().sum();
                        for ((si, gi), yi) in sg.iter_mut().zip(gg).zip(yg) {
                            *si += gi - yi.exp() * total;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let n = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accumulate(grads, p, |s| {
                        for (sr, gr) in s.chunks_mut(w).zip(g.chunks(n)) {
                            for (si, gi) in sr.iter_mut().zip(&gr[offset..offset + w]) {
                                *si += gi;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                let n = self.value(*x).cols();
                let w = node.value.cols();
                self.accumulate(grads, *x, |s| {
                    for (sr, gr) in s.chunks_mut(n).zip(g.chunks(w)) {
                        for (si, gi) in sr[*start..*start + w].iter_mut().zip(gr) {
                            *si += gi;
                        }
                    }
                });
            }
            Op::SumAll(x) => self.accumulate_elementwise(grads, *x, &vec![g[0]; self.value(*x).len()], |_, gi| gi),
            Op::SumCols(x) => {
                let n = self.value(*x).cols();
                self.accumulate(grads, *x, |s| {
                    for (sr, gi) in s.chunks_mut(n).zip(g) {
                        sr.iter_mut().for_each(|v| *v += gi);
                    }
                });
            }
            Op::RepeatRows(x, times) => {
                let n = self.value(*x).cols();
                self.accumulate(grads, *x, |s| {
                    for (r, gr) in g.chunks(n).enumerate() {
                        let sr = &mut s[(r / times) * n..(r / times + 1) * n];
                        for (si, gi) in sr.iter_mut().zip(gr) {
                            *si += gi;
                        }
                    }
                });
            }
            Op::MeanRowGroups(x, group) => {
                let n = self.value(*x).cols();
                let inv = 1.0 / *group as f64;
                self.accumulate(grads, *x, |s| {
                    for (r, sr) in s.chunks_mut(n).enumerate() {
                        let gr = &g[(r / group) * n..(r / group + 1) * n];
                        for (si, gi) in sr.iter_mut().zip(gr) {
                            *si += gi * inv;
                        }
                    }
                });
            }
            Op::StraightThrough(p) => self.accumulate_elementwise(grads, *p, g, |_, gi| gi),
            Op::Clamp(x, lo, hi) => {
                let xv = self.value(*x).data();
                self.accumulate_elementwise(grads, *x, g, |i, gi| if xv[i] >= *lo && xv[i] <= *hi { gi } else { 0.0 });
            }
            Op::GroupedAttention { q, k, v, group, weights } => {
                self.attention_backward(*q, *k, *v, *group, weights, g, grads);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        group: usize,
        weights: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (m, d) = self.value(q).dims2();
        let dv = self.value(v).cols();
        let scale = 1.0 / (d as f64).sqrt();
        let (qt, kt, vt) = (self.value(q), self.value(k), self.value(v));
        let mut dq = vec![0.0; m * d];
        let mut dk = vec![0.0; m * d];
        let mut dvv = vec![0.0; m * dv];
        let mut dp = vec![0.0; group];
        for blk in 0..m / group {
            let base = blk * group;
            for i in 0..group {
                let gi = &g[(base + i) * dv..(base + i + 1) * dv];
                let w = &weights[(base + i) * group..(base + i + 1) * group];
                for j in 0..group {
                    dp[j] = dot(gi, vt.row(base + j));
                    for (a, b) in dvv[(base + j) * dv..(base + j + 1) * dv].iter_mut().zip(gi) {
                        *a += w[j] * b;
                    }
                }
                let inner: f64 = dp.iter().zip(w).map(|(a, b)| a * b).sum();
                for j in 0..group {
                    let ds = w[j] * (dp[j] - inner) * scale;
                    for c in 0..d {
                        dq[(base + i) * d + c] += ds * kt.at(base + j, c);
                        dk[(base + j) * d + c] += ds * qt.at(base + i, c);
                    }
                }
            }
        }
        self.accumulate_elementwise(grads, q, &dq, |_, x| x);
        self.accumulate_elementwise(grads, k, &dk, |_, x| x);
        self.accumulate_elementwise(grads, v, &dvv, |_, x| x);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn softmax_in_place(g: &mut [f64]) {
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in g.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    g.iter_mut().for_each(|v| *v /= total);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax over each row of a `[K, C]` tensor.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return Err(Error::Contract("softmax_rows: non-finite logits".into()));
    }
    let c = logits.cols();
    let mut out = logits.data().to_vec();
    out.chunks_mut(c).for_each(softmax_in_place);
    Ok(Tensor::new(logits.shape().to_vec(), out))
}
