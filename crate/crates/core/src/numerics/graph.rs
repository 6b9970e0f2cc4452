//! Reverse-mode tape over [`Tensor2D`] values.
//!
//! A [`Graph`] borrows a [`ParamStore`] read-only; parameter leaves are looked
//! up in the store instead of being copied. `backward` returns a
//! [`Gradients`] value that the caller folds into the store with
//! [`ParamStore::accumulate`], so several graphs can share one snapshot.

use crate::error::{Error, Result};
use crate::numerics::param::{Gradients, ParamId, ParamStore};
use crate::numerics::tensor::{sigmoid, Tensor2D};

/// Node handle inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
    Transpose(Var),
    SelectRow(Var, usize),
    MaxOverRows(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    BceWithLogits(Vec<Var>, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Option<Tensor2D>,
    requires_grad: bool,
}

/// Probability clamp used by the loss value.
pub const PROB_CLAMP: f64 = 1e-7;

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2D {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.params.value(*id),
            (_, Some(t)) => t,
            (_, None) => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor2D, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let trainable = self.params.get(id).trainable;
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor2D) -> Var {
        self.push(Op::Const, t, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), out, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Hadamard(a, b), out, rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).sigmoid();
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), out, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).tanh();
        let rg = self.rg(a);
        self.push(Op::Tanh(a), out, rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).concat_cols(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::ConcatCols(a, b), out, rg))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let out = {
            let vals: Vec<&Tensor2D> = parts.iter().map(|&v| self.value(v)).collect();
            Tensor2D::stack_rows(&vals)?
        };
        let rg = parts.iter().any(|&v| self.rg(v));
        Ok(self.push(Op::StackRows(parts.to_vec()), out, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a), out, rg)
    }

    /// Row `r` of `a` as a `1×cols` tensor.
    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        let src = self.value(a);
        if r >= src.rows() {
            return Err(Error::Dimension {
                op: "select_row",
                left: src.shape(),
                right: (r, src.cols()),
            });
        }
        let out = Tensor2D::row(src.row_slice(r));
        let rg = self.rg(a);
        Ok(self.push(Op::SelectRow(a, r), out, rg))
    }

    /// Column-wise max; backward routes each column's gradient to its
    /// winning row only (lowest row index on ties).
    pub fn max_over_rows(&mut self, a: Var) -> Result<Var> {
        let (out, argmax) = self.value(a).max_over_rows()?;
        let rg = self.rg(a);
        Ok(self.push(Op::MaxOverRows(a, argmax), out, rg))
    }

    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("gather_rows"));
        }
        let out = self.value(table).gather_rows(indices)?;
        let rg = self.rg(table);
        Ok(self.push(Op::GatherRows(table, indices.to_vec()), out, rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Op::SumAll(a), Tensor2D::scalar(s), rg)
    }

    /// Mean binary cross-entropy of `σ(logit_i)` against `labels`.
    ///
    /// The reported value clamps probabilities to `[PROB_CLAMP, 1 - PROB_CLAMP]`;
    /// the gradient is `σ(z) - y` everywhere, so saturated mistakes still
    /// receive signal.
    pub fn bce_with_logits(&mut self, logits: &[Var], labels: &[f64]) -> Result<Var> {
        if logits.is_empty() {
            return Err(Error::EmptyInput("bce_with_logits"));
        }
        if logits.len() != labels.len() {
            return Err(Error::Dimension {
                op: "bce_with_logits",
                left: (logits.len(), 1),
                right: (labels.len(), 1),
            });
        }
        let mut total = 0.0;
        for (&z, &y) in logits.iter().zip(labels) {
            let z = self.value(z).item()?;
            total += bce_term(sigmoid(z), y);
        }
        let rg = logits.iter().any(|&v| self.rg(v));
        let loss = total / logits.len() as f64;
        Ok(self.push(
            Op::BceWithLogits(logits.to_vec(), labels.to_vec()),
            Tensor2D::scalar(loss),
            rg,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads = Gradients {
            grads: vec![None; self.params.len()],
        };
        let mut adj: Vec<Option<Tensor2D>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(Tensor2D::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(d_out) = adj[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Param(id) => match &mut grads.grads[id.0] {
                    Some(g) => g.add_assign(&d_out)?,
                    slot @ None => *slot = Some(d_out),
                },
                Op::Const => {}
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let da = d_out.matmul(&self.value(*b).transpose())?;
                        accum(&mut adj, *a, da)?;
                    }
                    if self.rg(*b) {
                        let db = self.value(*a).transpose().matmul(&d_out)?;
                        accum(&mut adj, *b, db)?;
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accum(&mut adj, *a, d_out.clone())?;
                    }
                    if self.rg(*b) {
                        accum(&mut adj, *b, d_out)?;
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.rg(*a) {
                        accum(&mut adj, *a, d_out.hadamard(self.value(*b))?)?;
                    }
                    if self.rg(*b) {
                        accum(&mut adj, *b, d_out.hadamard(self.value(*a))?)?;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(idx));
                    let mut da = d_out;
                    for (d, &s) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= s * (1.0 - s);
                    }
                    accum(&mut adj, *a, da)?;
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(idx));
                    let mut da = d_out;
                    for (d, &t) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - t * t;
                    }
                    accum(&mut adj, *a, da)?;
                }
                Op::ConcatCols(a, b) => {
                    let left = self.value(*a).cols();
                    let rows = d_out.rows();
                    if self.rg(*a) {
                        let mut da = Tensor2D::zeros(rows, left);
                        for r in 0..rows {
                            for c in 0..left {
                                da.set(r, c, d_out.get(r, c));
                            }
                        }
                        accum(&mut adj, *a, da)?;
                    }
                    if self.rg(*b) {
                        let right = self.value(*b).cols();
                        let mut db = Tensor2D::zeros(rows, right);
                        for r in 0..rows {
                            for c in 0..right {
                                db.set(r, c, d_out.get(r, left + c));
                            }
                        }
                        accum(&mut adj, *b, db)?;
                    }
                }
                Op::StackRows(parts) => {
                    let cols = d_out.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        if self.rg(p) {
                            let slice = d_out.data()[offset * cols..(offset + rows) * cols].to_vec();
                            accum(&mut adj, p, Tensor2D::from_vec(rows, cols, slice)?)?;
                        }
                        offset += rows;
                    }
                }
                Op::Transpose(a) => accum(&mut adj, *a, d_out.transpose())?,
                Op::SelectRow(a, r) => {
                    let target = slot(&mut adj, *a, self.value(*a));
                    for (c, &d) in d_out.data().iter().enumerate() {
                        let cur = target.get(*r, c);
                        target.set(*r, c, cur + d);
                    }
                }
                Op::MaxOverRows(a, argmax) => {
                    let target = slot(&mut adj, *a, self.value(*a));
                    for (c, &r) in argmax.iter().enumerate() {
                        let cur = target.get(r, c);
                        target.set(r, c, cur + d_out.get(0, c));
                    }
                }
                Op::GatherRows(table, indices) => {
                    let target = slot(&mut adj, *table, self.value(*table));
                    for (i, &row) in indices.iter().enumerate() {
                        for c in 0..d_out.cols() {
                            let cur = target.get(row, c);
                            target.set(row, c, cur + d_out.get(i, c));
                        }
                    }
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(*a).shape();
                    accum(&mut adj, *a, Tensor2D::filled(r, c, d_out.item()?))?;
                }
                Op::BceWithLogits(logits, labels) => {
                    let scale = d_out.item()? / logits.len() as f64;
                    for (&z, &y) in logits.iter().zip(labels) {
                        if self.rg(z) {
                            let p = sigmoid(self.value(z).item()?);
                            accum(&mut adj, z, Tensor2D::scalar((p - y) * scale))?;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

/// Per-pair loss term with the probability clamp applied.
pub fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn accum(adj: &mut [Option<Tensor2D>], v: Var, t: Tensor2D) -> Result<()> {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => {
            *slot = Some(t);
            Ok(())
        }
    }
}

fn slot<'a>(adj: &'a mut [Option<Tensor2D>], v: Var, like: &Tensor2D) -> &'a mut Tensor2D {
    adj[v.0].get_or_insert_with(|| Tensor2D::zeros(like.rows(), like.cols()))
}
