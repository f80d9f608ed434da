//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation in execution order, so node indices are
//! already a topological order. [`Tape::backward`] walks the record in reverse
//! and accumulates vector-Jacobian products into the parents of each node.
//! Nodes whose inputs never require gradients are skipped.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Floor applied inside every logarithm of a probability-like quantity.
pub const PROB_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    BroadcastRows(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln { x: Var, floor: f64 },
    Clamp { x: Var, lo: f64, hi: f64 },
    Square(Var),
    Sum(Var),
    MeanRows(Var),
    LogSoftmaxRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` is not reachable from the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn wrt_all(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives gradients (inputs, frozen parameters).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = parents(&op)
            .iter()
            .any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// `a · bᵀ`, both operands `[_, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.expect_matrix("matmul_nt")?;
        bv.expect_matrix("matmul_nt")?;
        if av.cols() != bv.cols() {
            return Err(Error::Dimension {
                op: "matmul_nt",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut out = Tensor::zeros(&[av.rows(), bv.rows()]);
        gemm(1.0, av.view(), bv.view().t(), 0.0, out.view_mut());
        self.push(out, Op::MatMulNt(a, b), "matmul_nt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    /// Repeats a `[1, n]` row `rows` times.
    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Result<Var> {
        let rv = self.value(row);
        if rv.shape().len() != 2 || rv.rows() != 1 {
            return Err(Error::Dimension {
                op: "broadcast_rows",
                left: rv.shape().to_vec(),
                right: vec![1, rv.cols()],
            });
        }
        let n = rv.cols();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(rv.data());
        }
        let out = Tensor::new(vec![rows, n], data)?;
        self.push(out, Op::BroadcastRows(row), "broadcast_rows")
    }

    /// `a + row` with `row: [1, n]` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let rows = self.value(a).rows();
        let b = self.broadcast_rows(row, rows)?;
        self.add(a, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| c * x);
        self.push(out, Op::Scale(a, c), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a), "add_scalar")
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), "exp")
    }

    /// Natural log of `max(a, PROB_EPS)`.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.ln_floor(a, PROB_EPS)
    }

    /// Natural log of `max(a, floor)`; the gradient is zero below the floor.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(out, Op::Ln { x: a, floor }, "ln")
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only inside the range.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp { x: a, lo, hi }, "clamp")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a), "square")
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Column means of an `[m, n]` matrix, as `[1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        av.expect_matrix("mean_rows")?;
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, x) in out.iter_mut().zip(av.row(i)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        let out = Tensor::new(vec![1, n], out)?;
        self.push(out, Op::MeanRows(a), "mean_rows")
    }

    /// Row-wise log-softmax of an `[m, n]` matrix.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        av.expect_matrix("log_softmax_rows")?;
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = av.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for j in 0..n {
                out[i * n + j] = row[j] - lse;
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        self.push(out, Op::LogSoftmaxRows(a), "log_softmax_rows")
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if wants(a) {
                    let slot = slot(grads, a, av.shape());
                    gemm(1.0, g.view(), bv.view().t(), 1.0, slot.view_mut());
                }
                if wants(b) {
                    let slot = slot(grads, b, bv.shape());
                    gemm(1.0, av.view().t(), g.view(), 1.0, slot.view_mut());
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if wants(a) {
                    let slot = slot(grads, a, av.shape());
                    gemm(1.0, g.view(), bv.view(), 1.0, slot.view_mut());
                }
                if wants(b) {
                    let slot = slot(grads, b, bv.shape());
                    gemm(1.0, g.view().t(), av.view(), 1.0, slot.view_mut());
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, a, g, |_, gi| gi);
                }
                if wants(b) {
                    accumulate(grads, b, g, |_, gi| gi);
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(grads, a, g, |_, gi| gi);
                }
                if wants(b) {
                    accumulate(grads, b, g, |_, gi| -gi);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if wants(a) {
                    accumulate(grads, a, g, |k, gi| gi * bv.data()[k]);
                }
                if wants(b) {
                    accumulate(grads, b, g, |k, gi| gi * av.data()[k]);
                }
            }
            Op::BroadcastRows(row) => {
                if wants(row) {
                    let n = g.cols();
                    let slot = slot(grads, row, self.value(row).shape());
                    let out = slot.data_mut();
                    for i in 0..g.rows() {
                        for (o, x) in out.iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    debug_assert_eq!(out.len(), n);
                }
            }
            Op::Scale(a, c) => {
                if wants(a) {
                    accumulate(grads, a, g, |_, gi| c * gi);
                }
            }
            Op::AddScalar(a) => {
                if wants(a) {
                    accumulate(grads, a, g, |_, gi| gi);
                }
            }
            Op::Relu(a) => {
                let av = self.value(a);
                accumulate(grads, a, g, |k, gi| if av.data()[k] > 0.0 { gi } else { 0.0 });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accumulate(grads, a, g, |k, gi| {
                    let s = y.data()[k];
                    gi * s * (1.0 - s)
                });
            }
            Op::Exp(a) => {
                let y = &node.value;
                accumulate(grads, a, g, |k, gi| gi * y.data()[k]);
            }
            Op::Ln { x, floor } => {
                let xv = self.value(x);
                accumulate(grads, x, g, |k, gi| {
                    let v = xv.data()[k];
                    if v >= floor {
                        gi / v
                    } else {
                        0.0
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(x);
                accumulate(grads, x, g, |k, gi| {
                    let v = xv.data()[k];
                    if (lo..=hi).contains(&v) {
                        gi
                    } else {
                        0.0
                    }
                });
            }
            Op::Square(a) => {
                let av = self.value(a);
                accumulate(grads, a, g, |k, gi| 2.0 * av.data()[k] * gi);
            }
            Op::Sum(a) => {
                let gs = g.data()[0];
                let shape = self.value(a).shape().to_vec();
                let slot = slot(grads, a, &shape);
                slot.data_mut().iter_mut().for_each(|o| *o += gs);
            }
            Op::MeanRows(a) => {
                let av = self.value(a);
                let (m, n) = (av.rows(), av.cols());
                let inv = 1.0 / m as f64;
                let slot = slot(grads, a, av.shape());
                let out = slot.data_mut();
                for i in 0..m {
                    for j in 0..n {
                        out[i * n + j] += g.data()[j] * inv;
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let slot = slot(grads, a, y.shape());
                let out = slot.data_mut();
                for i in 0..m {
                    let gr = g.row(i);
                    let total: f64 = gr.iter().sum();
                    for j in 0..n {
                        out[i * n + j] += gr[j] - y.data()[i * n + j].exp() * total;
                    }
                }
            }
        }
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match *op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::MatMulNt(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
            vec![a, b]
        }
        Op::BroadcastRows(a)
        | Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::Exp(a)
        | Op::Square(a)
        | Op::Sum(a)
        | Op::MeanRows(a)
        | Op::LogSoftmaxRows(a) => vec![a],
        Op::Ln { x, .. } | Op::Clamp { x, .. } => vec![x],
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

/// `grad[v][k] += f(k, g[k])`
fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: &Tensor, f: impl Fn(usize, f64) -> f64) {
    let slot = slot(grads, v, g.shape());
    for (k, (o, &gi)) in slot.data_mut().iter_mut().zip(g.data()).enumerate() {
        *o += f(k, gi);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
