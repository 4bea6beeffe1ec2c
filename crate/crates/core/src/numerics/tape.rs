//! Matrix-valued reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. Nodes are appended only after their operands, so the node order is a
//! topological order and [`Tape::backward`] can visit each node exactly once by
//! walking it in reverse.
//!
//! ```
//! use textgcl::numerics::{DenseMatrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
//! let loss = tape.sum_squares(w).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().as_slice(), &[2.0, 4.0, 6.0, 8.0]);
//! ```

use std::collections::HashMap;
use std::sync::Arc;

use super::{CsrMatrix, DenseMatrix, NumericsError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One logit of a softmax cross-entropy group: `scale * source[row, col]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogitTerm {
    pub source: Var,
    pub row: usize,
    pub col: usize,
    pub scale: f64,
}

/// A softmax over gathered logits whose first term is the target class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogitGroup {
    pub terms: Vec<LogitTerm>,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulTransB(Var, Var),
    SparseMatMul(Arc<CsrMatrix>, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    NormalizeRows(Var),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    SumSquares(Var),
    SoftmaxXent(Vec<LogitGroup>),
}

impl Op {
    fn operands(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::MatMulTransB(a, b) | Op::AddBias(a, b) | Op::Add(a, b) => {
                vec![*a, *b]
            }
            Op::SparseMatMul(_, a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::NormalizeRows(a)
            | Op::GatherRows(a, _)
            | Op::Sum(a)
            | Op::SumSquares(a) => vec![*a],
            Op::SoftmaxXent(groups) => {
                let mut v: Vec<Var> = groups.iter().flat_map(|g| g.terms.iter().map(|t| t.source)).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
    trainable: bool,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every trainable leaf of a tape.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&DenseMatrix> {
        self.grads.get(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Records a constant input.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push_leaf(value, false)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push_leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn push_leaf(&mut self, value: DenseMatrix, trainable: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            trainable,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&DenseMatrix, NumericsError> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or(NumericsError::UnknownVar(v.0))
    }

    fn push(&mut self, op: Op, value: DenseMatrix) -> Var {
        let needs_grad = op.operands().iter().any(|o| self.nodes[o.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            trainable: false,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.check(a)?.matmul(self.check(b)?)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a · bᵀ`.
    pub fn matmul_transpose_b(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.check(a)?.matmul_transpose_b(self.check(b)?)?;
        Ok(self.push(Op::MatMulTransB(a, b), value))
    }

    /// Constant sparse matrix times a recorded dense operand.
    pub fn sparse_matmul(&mut self, s: &Arc<CsrMatrix>, b: Var) -> Result<Var, NumericsError> {
        let value = s.matmul_dense(self.check(b)?)?;
        Ok(self.push(Op::SparseMatMul(Arc::clone(s), b), value))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let value = self.check(x)?.add_bias(self.check(bias)?)?;
        Ok(self.push(Op::AddBias(x, bias), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.check(a)?.add(self.check(b)?)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, NumericsError> {
        let value = self.check(a)?.scale(k);
        Ok(self.push(Op::Scale(a, k), value))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = self.check(x)?.relu();
        Ok(self.push(Op::Relu(x), value))
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = self.check(x)?.l2_normalize_rows();
        Ok(self.push(Op::NormalizeRows(x), value))
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let src = self.check(x)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.rows()) {
            return Err(NumericsError::IndexOutOfRange {
                index: bad,
                len: src.rows(),
            });
        }
        let value = src.gather_rows(indices);
        Ok(self.push(Op::GatherRows(x, indices.to_vec()), value))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = DenseMatrix::scalar(self.check(x)?.sum());
        Ok(self.push(Op::Sum(x), value))
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = DenseMatrix::scalar(self.check(x)?.frobenius_sq());
        Ok(self.push(Op::SumSquares(x), value))
    }

    /// Mean over groups of `logsumexp(z) - z[0]`, where `z` are the group's
    /// scaled logits. Evaluated with the max-shift so large logits stay finite.
    pub fn softmax_cross_entropy(&mut self, groups: Vec<LogitGroup>) -> Result<Var, NumericsError> {
        if groups.is_empty() {
            return Err(NumericsError::EmptyGroup);
        }
        let mut total = 0.0;
        for g in &groups {
            let z = self.group_logits(g)?;
            total += log_sum_exp(&z) - z[0];
        }
        let value = total / groups.len() as f64;
        if !value.is_finite() {
            return Err(NumericsError::NonFinite("softmax cross-entropy"));
        }
        Ok(self.push(Op::SoftmaxXent(groups), DenseMatrix::scalar(value)))
    }

    fn group_logits(&self, g: &LogitGroup) -> Result<Vec<f64>, NumericsError> {
        if g.terms.is_empty() {
            return Err(NumericsError::EmptyGroup);
        }
        g.terms
            .iter()
            .map(|t| {
                let m = self.check(t.source)?;
                if t.row >= m.rows() || t.col >= m.cols() {
                    return Err(NumericsError::IndexOutOfRange {
                        index: t.row.max(t.col),
                        len: m.rows().min(m.cols()),
                    });
                }
                let z = t.scale * m.get(t.row, t.col);
                if z.is_finite() {
                    Ok(z)
                } else {
                    Err(NumericsError::NonFinite("logit"))
                }
            })
            .collect()
    }

    /// Reverse pass from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let out = self.check(loss)?;
        if out.shape() != (1, 1) {
            return Err(NumericsError::NotScalar(out.shape()));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.trainable {
                grads[id] = Some(g);
                continue;
            }
            if !node.needs_grad {
                continue;
            }
            for operand in node.op.operands() {
                if operand.0 >= id {
                    return Err(NumericsError::Cycle(id));
                }
            }
            self.propagate(id, &g, &mut grads)?;
        }

        let mut result = Gradients::default();
        for (id, node) in self.nodes.iter().enumerate() {
            if node.trainable {
                let g = grads
                    .get_mut(id)
                    .and_then(Option::take)
                    .unwrap_or_else(|| DenseMatrix::zeros(node.value.rows(), node.value.cols()));
                result.grads.insert(Var(id), g);
            }
        }
        Ok(result)
    }

    fn propagate(&self, id: usize, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<(), NumericsError> {
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.matmul_transpose_b(self.value(*b))?)?;
                }
                if wants(*b) {
                    accumulate(grads, *b, self.value(*a).transpose_a_matmul(g)?)?;
                }
            }
            Op::MatMulTransB(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.matmul(self.value(*b))?)?;
                }
                if wants(*b) {
                    accumulate(grads, *b, g.transpose_a_matmul(self.value(*a))?)?;
                }
            }
            Op::SparseMatMul(s, b) => {
                if wants(*b) {
                    accumulate(grads, *b, s.transpose_matmul_dense(g)?)?;
                }
            }
            Op::AddBias(x, b) => {
                if wants(*x) {
                    accumulate(grads, *x, g.clone())?;
                }
                if wants(*b) {
                    let mut col_sums = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(grads, *b, col_sums)?;
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone())?;
                }
                if wants(*b) {
                    accumulate(grads, *b, g.clone())?;
                }
            }
            Op::Scale(a, k) => accumulate(grads, *a, g.scale(*k))?,
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::NormalizeRows(x) => {
                let xv = self.value(*x);
                let y = &self.nodes[id].value;
                let mut dx = DenseMatrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let norm = super::dot(xv.row(r), xv.row(r)).sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let proj = super::dot(yr, gr);
                    for ((d, &gv), &yv) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *d = (gv - yv * proj) / norm;
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::GatherRows(x, indices) => {
                let xv = self.value(*x);
                let mut dx = DenseMatrix::zeros(xv.rows(), xv.cols());
                for (k, &src) in indices.iter().enumerate() {
                    for (d, v) in dx.row_mut(src).iter_mut().zip(g.row(k)) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, DenseMatrix::filled(xv.rows(), xv.cols(), g.get(0, 0)))?;
            }
            Op::SumSquares(x) => {
                let k = 2.0 * g.get(0, 0);
                accumulate(grads, *x, self.value(*x).scale(k))?;
            }
            Op::SoftmaxXent(groups) => {
                let upstream = g.get(0, 0) / groups.len() as f64;
                let mut local: HashMap<Var, DenseMatrix> = HashMap::new();
                for group in groups {
                    let z = self.group_logits(group)?;
                    let lse = log_sum_exp(&z);
                    for (k, term) in group.terms.iter().enumerate() {
                        if !wants(term.source) {
                            continue;
                        }
                        let p = (z[k] - lse).exp();
                        let dz = if k == 0 { p - 1.0 } else { p };
                        let src = self.value(term.source);
                        let entry = local
                            .entry(term.source)
                            .or_insert_with(|| DenseMatrix::zeros(src.rows(), src.cols()));
                        let cur = entry.get(term.row, term.col);
                        entry.set(term.row, term.col, cur + upstream * dz * term.scale);
                    }
                }
                let mut local: Vec<_> = local.into_iter().collect();
                local.sort_by_key(|(v, _)| *v);
                for (v, d) in local {
                    accumulate(grads, v, d)?;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, delta: DenseMatrix) -> Result<(), NumericsError> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

/// `ln Σ exp(zₖ)` with the max shifted out.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
