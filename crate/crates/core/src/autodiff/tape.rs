//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its variables in execution
//! order. [`Tape::backward`] consumes the tape, walks it in reverse and
//! returns the gradient of a scalar loss with respect to every variable that
//! participates in gradient flow.

use std::sync::Arc;

use super::tensor::{gemm, GemmOperand};
use super::{SparseMatrix, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    Add { a: Var, b: Var, row_bcast: bool },
    Sub { a: Var, b: Var, row_bcast: bool },
    MulElem { a: Var, b: Var, row_bcast: bool },
    ConcatCols(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    MeanScalar(Var),
    SumCols(Var),
    Scale(Var, f64),
    GatherRows(Var, Vec<usize>),
    Bce { probs: Var, labels: Vec<f64>, eps: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation recorder. Single-threaded; build one per forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: gradients for every variable that required
/// one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Removes and returns a gradient, or a zero tensor of `shape` when `v`
    /// did not influence the loss.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<bool> {
    if a.shape() == b.shape() {
        Ok(false)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Ok(true)
    } else {
        Err(Error::dim(op, a.shape(), b.shape()))
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn sparse_matmul(&mut self, a: &Arc<SparseMatrix>, b: Var) -> Result<Var> {
        let out = a.matmul(self.value(b))?;
        let rg = self.rg(&[b]);
        Ok(self.push(out, Op::SparseMatMul(Arc::clone(a), b), rg))
    }

    /// Elementwise sum. `b` may be a `1×cols` row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let row_bcast = broadcast_kind("add", va, vb)?;
        let out = zip_bcast(va, vb, row_bcast, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add { a, b, row_bcast }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let row_bcast = broadcast_kind("sub", va, vb)?;
        let out = zip_bcast(va, vb, row_bcast, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub { a, b, row_bcast }, rg))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let row_bcast = broadcast_kind("mul_elem", va, vb)?;
        let out = zip_bcast(va, vb, row_bcast, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MulElem { a, b, row_bcast }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::dim("concat_cols", va.shape(), vb.shape()));
        }
        let (ca, cb) = (va.cols(), vb.cols());
        let out = Tensor::from_fn(va.rows(), ca + cb, |i, j| {
            if j < ca {
                va.get(i, j)
            } else {
                vb.get(i, j - ca)
            }
        });
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(&[a]);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = va.clone();
        let cols = va.cols();
        for row in out.data_mut().chunks_mut(cols.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Mean of all entries as a 1×1 tensor.
    pub fn mean_scalar(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let out = Tensor::scalar(va.sum() / va.len() as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::MeanScalar(a), rg))
    }

    /// Sums each row, giving a `rows×1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::from_fn(va.rows(), 1, |i, _| va.row(i).iter().sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::SumCols(a), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::Contract(format!(
                "row index {bad} out of range for {} rows",
                va.rows()
            )));
        }
        let cols = va.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(va.row(i));
        }
        let out = Tensor::from_vec(indices.len(), cols, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::GatherRows(a, indices.to_vec()), rg))
    }

    /// Mean binary cross-entropy of an `M×1` column of probabilities against
    /// 0/1 labels. Probabilities are clamped to `[eps, 1 − eps]`; clamped
    /// entries pass no gradient.
    pub fn bce(&mut self, probs: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let vp = self.value(probs);
        if vp.cols() != 1 || vp.rows() != labels.len() {
            return Err(Error::dim("bce", vp.shape(), (labels.len(), 1)));
        }
        if labels.is_empty() {
            return Err(Error::Contract("binary cross-entropy over zero pairs".into()));
        }
        let m = labels.len() as f64;
        let total: f64 = vp
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let p = p.clamp(eps, 1.0 - eps);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let rg = self.rg(&[probs]);
        Ok(self.push(
            Tensor::scalar(total / m),
            Op::Bce {
                probs,
                labels: labels.to_vec(),
                eps,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a (1, 1) loss, got {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let acc = |grads: &mut [Option<Tensor>], v: Var, delta: Tensor| -> Result<()> {
            if !self.nodes[v.0].requires_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => existing.axpy(1.0, &delta),
                slot @ None => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let mut da = Tensor::zeros(va.rows(), va.cols());
                    gemm(GemmOperand::plain(g), GemmOperand::transposed(vb), &mut da, 0.0);
                    acc(grads, *a, da)?;
                }
                if self.requires_grad(*b) {
                    let mut db = Tensor::zeros(vb.rows(), vb.cols());
                    gemm(GemmOperand::transposed(va), GemmOperand::plain(g), &mut db, 0.0);
                    acc(grads, *b, db)?;
                }
            }
            Op::SparseMatMul(a, b) => {
                acc(grads, *b, a.transpose_matmul(g)?)?;
            }
            Op::Add { a, b, row_bcast } => {
                acc(grads, *a, g.clone())?;
                acc(grads, *b, reduce_bcast(g.clone(), *row_bcast))?;
            }
            Op::Sub { a, b, row_bcast } => {
                acc(grads, *a, g.clone())?;
                acc(grads, *b, reduce_bcast(g.map(|x| -x), *row_bcast))?;
            }
            Op::MulElem { a, b, row_bcast } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    acc(grads, *a, zip_bcast(g, vb, *row_bcast, |x, y| x * y))?;
                }
                if self.requires_grad(*b) {
                    let full = Tensor::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect(),
                    )?;
                    acc(grads, *b, reduce_bcast(full, *row_bcast))?;
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                acc(grads, *a, Tensor::from_fn(g.rows(), ca, |i, j| g.get(i, j)))?;
                acc(grads, *b, Tensor::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j)))?;
            }
            Op::Transpose(a) => acc(grads, *a, g.transpose())?,
            Op::Sigmoid(a) => {
                let d = zip_same(g, &node.value, |gi, s| gi * s * (1.0 - s));
                acc(grads, *a, d)?;
            }
            Op::Tanh(a) => {
                let d = zip_same(g, &node.value, |gi, t| gi * (1.0 - t * t));
                acc(grads, *a, d)?;
            }
            Op::Relu(a) => {
                let d = zip_same(g, self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                acc(grads, *a, d)?;
            }
            Op::SoftmaxRows(a) => {
                let s = &node.value;
                let cols = s.cols();
                let mut d = Tensor::zeros(s.rows(), cols);
                for i in 0..s.rows() {
                    let (sr, gr) = (s.row(i), g.row(i));
                    let dot: f64 = sr.iter().zip(gr).map(|(x, y)| x * y).sum();
                    for j in 0..cols {
                        d.set(i, j, sr[j] * (gr[j] - dot));
                    }
                }
                acc(grads, *a, d)?;
            }
            Op::MeanScalar(a) => {
                let va = self.value(*a);
                let scale = g.item()? / va.len() as f64;
                acc(grads, *a, Tensor::filled(va.rows(), va.cols(), scale))?;
            }
            Op::SumCols(a) => {
                let va = self.value(*a);
                acc(grads, *a, Tensor::from_fn(va.rows(), va.cols(), |i, _| g.get(i, 0)))?;
            }
            Op::Scale(a, c) => acc(grads, *a, g.map(|x| x * c))?,
            Op::GatherRows(a, indices) => {
                let va = self.value(*a);
                let cols = va.cols();
                let mut d = Tensor::zeros(va.rows(), cols);
                let dd = d.data_mut();
                for (k, &i) in indices.iter().enumerate() {
                    for (o, x) in dd[i * cols..(i + 1) * cols].iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(grads, *a, d)?;
            }
            Op::Bce { probs, labels, eps } => {
                let vp = self.value(*probs);
                let scale = g.item()? / labels.len() as f64;
                let d = Tensor::from_fn(vp.rows(), 1, |i, _| {
                    let p = vp.get(i, 0);
                    if p < *eps || p > 1.0 - *eps {
                        return 0.0;
                    }
                    let y = labels[i];
                    scale * (-(y / p) + (1.0 - y) / (1.0 - p))
                });
                acc(grads, *probs, d)?;
            }
        }
        Ok(())
    }
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn zip_bcast(a: &Tensor, b: &Tensor, row_bcast: bool, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if !row_bcast {
        return zip_same(a, b, f);
    }
    let cols = a.cols();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(k, &x)| f(x, b.data()[k % cols]))
        .collect();
    Tensor::from_vec(a.rows(), cols, data).expect("same shape")
}

fn reduce_bcast(g: Tensor, row_bcast: bool) -> Tensor {
    if !row_bcast {
        return g;
    }
    let mut out = Tensor::zeros(1, g.cols());
    for i in 0..g.rows() {
        for (o, x) in out.data_mut().iter_mut().zip(g.row(i)) {
            *o += x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).item().unwrap(), 0.5);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item().unwrap(), 0.25);
    }

    #[test]
    fn softmax_of_equal_row_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(2, 4, 3.7));
        let s = tape.softmax_rows(x);
        for &v in tape.value(s).data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_of_identity_product() {
        // loss = mean(W x), W = I₂, x = (1,1)ᵀ → dW = outer([½, ½], x).
        let mut tape = Tape::new();
        let w = tape.param(Tensor::identity(2));
        let x = tape.constant(Tensor::from_rows(&[[1.0], [1.0]]));
        let wx = tape.matmul(w, x).unwrap();
        let loss = tape.mean_scalar(wx).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(
            grads.get(w).unwrap(),
            &Tensor::from_rows(&[[0.5, 0.5], [0.5, 0.5]])
        );
    }

    #[test]
    fn double_use_accumulates() {
        let x0 = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let single = {
            let mut tape = Tape::new();
            let x = tape.param(x0.clone());
            let m = tape.mean_scalar(x).unwrap();
            tape.backward(m).unwrap().get(x).unwrap().clone()
        };
        let mut tape = Tape::new();
        let x = tape.param(x0);
        let m1 = tape.mean_scalar(x).unwrap();
        let m2 = tape.mean_scalar(x).unwrap();
        let loss = tape.add(m1, m2).unwrap();
        let double = tape.backward(loss).unwrap().get(x).unwrap().clone();
        assert_eq!(double, single.map(|v| 2.0 * v));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn row_broadcast_bias_gradient_sums_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(3, 2));
        let b = tape.param(Tensor::from_rows(&[[1.0, 2.0]]));
        let y = tape.add(x, b).unwrap();
        let loss = tape.mean_scalar(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gb = grads.get(b).unwrap();
        assert_eq!(gb.shape(), (1, 2));
        assert!((gb.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(3, 3));
        let msg = tape.add(a, b).unwrap_err().to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(3, 3)"), "{msg}");
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let p = tape.param(Tensor::scalar(3.0));
        let y = tape.mul_elem(c, p).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn stabilized_ops_stay_finite() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_fn(3, 5, |i, j| (i as f64 - 1.0) * 10.0 + j as f64 - 2.0));
        let s = tape.sigmoid(x);
        let t = tape.tanh(x);
        let sm = tape.softmax_rows(x);
        let a = tape.add(s, t).unwrap();
        let b = tape.add(a, sm).unwrap();
        let loss = tape.mean_scalar(b).unwrap();
        assert!(tape.value(loss).is_finite());
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(x).unwrap().is_finite());
    }
}
