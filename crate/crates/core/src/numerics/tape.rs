//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! A [`Tape`] records every intermediate matrix together with the primitive
//! that produced it. [`Tape::backward`] walks the record in reverse and
//! accumulates vector-Jacobian products into the leaves that were registered
//! as trainable. Nodes that do not depend on a trainable leaf are never
//! visited during the backward pass.
//!
//! ```
//! use unlearnrec::numerics::{DenseMatrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(DenseMatrix::from_rows(&[[1.0, -2.0]]).unwrap());
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().values(), &[2.0, -4.0]);
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::dense::{dot, DenseMatrix};
use crate::numerics::sparse::SparseSymMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    SpMM { adj: Arc<SparseSymMatrix>, x: Var },
    MatMul { a: Var, b: Var },
    MatMulTransB { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    RowScale { x: Var, w: Var },
    AddRowBias { x: Var, b: Var },
    LeakyRelu { x: Var, slope: f64 },
    GatherRows { x: Var, idx: Vec<usize> },
    RowDot { a: Var, b: Var },
    RowNormalize { x: Var, norms: Vec<f64> },
    LogSigmoid { x: Var },
    LogSoftmaxRows { x: Var },
    Diagonal { x: Var },
    Transpose { x: Var },
    Sum { x: Var },
}

#[derive(Clone, Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    needs_grad: bool,
    trainable: bool,
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    slots: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` for anything else.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.slots.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<DenseMatrix> {
        self.slots.get_mut(v.0).and_then(Option::take)
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

    /// A trainable leaf; it receives a gradient slot in [`Tape::backward`].
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push_leaf(value, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push_leaf(value, false)
    }

    pub fn leaf(&mut self, value: DenseMatrix, trainable: bool) -> Var {
        self.push_leaf(value, trainable)
    }

    fn push_leaf(&mut self, value: DenseMatrix, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
            trainable,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: DenseMatrix, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            trainable: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> Option<f64> {
        self.value(v).as_scalar()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn spmm(&mut self, adj: &Arc<SparseSymMatrix>, x: Var) -> Result<Var> {
        let value = adj.spmm(self.value(x))?;
        Ok(self.push(value, Op::SpMM { adj: Arc::clone(adj), x }, &[x]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul { a, b }, &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_transb(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transb(self.value(b))?;
        Ok(self.push(value, Op::MatMulTransB { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub { a, b }, &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale { x, c }, &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    /// Row `i` of `x` times `w[i]`, with `w` an n×1 column.
    pub fn row_scale(&mut self, x: Var, w: Var) -> Result<Var> {
        let value = self.value(x).scale_rows(self.value(w))?;
        Ok(self.push(value, Op::RowScale { x, w }, &[x, w]))
    }

    /// Adds the 1×d row `b` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row_bias",
                format!("{:?} + bias {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (v, &bias) in value.row_mut(r).iter_mut().zip(bv.values()) {
                *v += bias;
            }
        }
        Ok(self.push(value, Op::AddRowBias { x, b }, &[x, b]))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let value = self.value(x).gather_rows(idx)?;
        Ok(self.push(value, Op::GatherRows { x, idx: idx.to_vec() }, &[x]))
    }

    /// Per-row dot product of two equally shaped matrices, as an n×1 column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "row_dot",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let value = DenseMatrix::column((0..av.rows()).map(|r| dot(av.row(r), bv.row(r))).collect());
        Ok(self.push(value, Op::RowDot { a, b }, &[a, b]))
    }

    /// Scales each row to unit L2 norm. All-zero rows stay zero.
    pub fn row_normalize(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let norms: Vec<f64> = (0..xv.rows()).map(|r| dot(xv.row(r), xv.row(r)).sqrt()).collect();
        let mut value = xv.clone();
        for (r, &n) in norms.iter().enumerate() {
            let inv = if n > 0.0 { 1.0 / n } else { 0.0 };
            value.row_mut(r).iter_mut().for_each(|v| *v *= inv);
        }
        self.push(value, Op::RowNormalize { x, norms }, &[x])
    }

    /// Elementwise `log σ(x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(log_sigmoid);
        self.push(value, Op::LogSigmoid { x }, &[x])
    }

    /// Row-wise `x - logsumexp(x)`.
    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(value, Op::LogSoftmaxRows { x }, &[x])
    }

    /// Diagonal of a square matrix as an n×1 column.
    pub fn diagonal(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != xv.cols() {
            return Err(Error::shape("diagonal", format!("{:?} is not square", xv.shape())));
        }
        let value = DenseMatrix::column((0..xv.rows()).map(|i| xv.get(i, i)).collect());
        Ok(self.push(value, Op::Diagonal { x }, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose { x }, &[x])
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(x).sum());
        self.push(value, Op::Sum { x }, &[x])
    }

    /// Reverse pass from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }

        let slots = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                if self.nodes[i].trainable {
                    Some(g.unwrap_or_else(|| {
                        let (r, c) = self.nodes[i].value.shape();
                        DenseMatrix::zeros(r, c)
                    }))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { slots })
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let want = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::SpMM { adj, x } => {
                // Symmetric adjacency: Aᵀ·g == A·g.
                accumulate(grads, *x, adj.spmm(g)?)?;
            }
            Op::MatMul { a, b } => {
                if want(*a) {
                    accumulate(grads, *a, g.matmul_transb(self.value(*b))?)?;
                }
                if want(*b) {
                    accumulate(grads, *b, self.value(*a).transa_matmul(g)?)?;
                }
            }
            Op::MatMulTransB { a, b } => {
                if want(*a) {
                    accumulate(grads, *a, g.matmul(self.value(*b))?)?;
                }
                if want(*b) {
                    accumulate(grads, *b, g.transa_matmul(self.value(*a))?)?;
                }
            }
            Op::Add { a, b } => {
                if want(*a) {
                    accumulate(grads, *a, g.clone())?;
                }
                if want(*b) {
                    accumulate(grads, *b, g.clone())?;
                }
            }
            Op::Sub { a, b } => {
                if want(*a) {
                    accumulate(grads, *a, g.clone())?;
                }
                if want(*b) {
                    accumulate(grads, *b, g.scale(-1.0))?;
                }
            }
            Op::Mul { a, b } => {
                if want(*a) {
                    accumulate(grads, *a, g.hadamard(self.value(*b))?)?;
                }
                if want(*b) {
                    accumulate(grads, *b, g.hadamard(self.value(*a))?)?;
                }
            }
            Op::Scale { x, c } => accumulate(grads, *x, g.scale(*c))?,
            Op::RowScale { x, w } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if want(*x) {
                    accumulate(grads, *x, g.scale_rows(wv)?)?;
                }
                if want(*w) {
                    let gw = (0..xv.rows()).map(|r| dot(g.row(r), xv.row(r))).collect();
                    accumulate(grads, *w, DenseMatrix::column(gw))?;
                }
            }
            Op::AddRowBias { x, b } => {
                if want(*x) {
                    accumulate(grads, *x, g.clone())?;
                }
                if want(*b) {
                    let mut gb = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, &v) in gb.values_mut().iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(grads, *b, gb)?;
                }
            }
            Op::LeakyRelu { x, slope } => {
                let gx = g.zip_map(self.value(*x), "leaky_relu_grad", |gv, xv| {
                    if xv > 0.0 {
                        gv
                    } else {
                        slope * gv
                    }
                })?;
                accumulate(grads, *x, gx)?;
            }
            Op::GatherRows { x, idx } => {
                let (rows, cols) = self.value(*x).shape();
                let mut gx = DenseMatrix::zeros(rows, cols);
                for (k, &i) in idx.iter().enumerate() {
                    for (acc, &v) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *acc += v;
                    }
                }
                accumulate(grads, *x, gx)?;
            }
            Op::RowDot { a, b } => {
                if want(*a) {
                    accumulate(grads, *a, self.value(*b).scale_rows(g)?)?;
                }
                if want(*b) {
                    accumulate(grads, *b, self.value(*a).scale_rows(g)?)?;
                }
            }
            Op::RowNormalize { x, norms } => {
                let y = &node.value;
                let mut gx = DenseMatrix::zeros(y.rows(), y.cols());
                for (r, &n) in norms.iter().enumerate() {
                    if n == 0.0 {
                        continue;
                    }
                    let proj = dot(y.row(r), g.row(r));
                    let (yr, gr) = (y.row(r), g.row(r));
                    for ((out, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *out = (gv - yv * proj) / n;
                    }
                }
                accumulate(grads, *x, gx)?;
            }
            Op::LogSigmoid { x } => {
                let gx = g.zip_map(self.value(*x), "log_sigmoid_grad", |gv, xv| gv * sigmoid(-xv))?;
                accumulate(grads, *x, gx)?;
            }
            Op::LogSoftmaxRows { x } => {
                let y = &node.value;
                let mut gx = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gsum: f64 = g.row(r).iter().sum();
                    let (yr, gr) = (y.row(r), g.row(r));
                    for ((out, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *out = gv - yv.exp() * gsum;
                    }
                }
                accumulate(grads, *x, gx)?;
            }
            Op::Diagonal { x } => {
                let n = g.rows();
                let mut gx = DenseMatrix::zeros(n, n);
                for i in 0..n {
                    gx.set(i, i, g.get(i, 0));
                }
                accumulate(grads, *x, gx)?;
            }
            Op::Transpose { x } => accumulate(grads, *x, g.transpose())?,
            Op::Sum { x } => {
                let (r, c) = self.value(*x).shape();
                accumulate(grads, *x, DenseMatrix::filled(r, c, g.get(0, 0)))?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log σ(x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
