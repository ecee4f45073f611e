//! Reverse-mode gradient tape over dense matrices.
//!
//! Operations append records to a [`Tape`] and return [`Var`] handles. A
//! record only ever refers to earlier records, so [`Tape::backward`] can walk
//! the tape in exact reverse order, accumulating gradients additively.
//!
//! Every forward operation rejects non-finite output with
//! [`TensorError::NonFinite`].

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use rand::RngCore;
use thiserror::Error;

use crate::dense::{gemm, Matrix};
use crate::graph::PropMatrix;
use crate::rng::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("nll_loss: empty mask")]
    EmptyMask,
    #[error("nll_loss: label {label} out of range for {classes} classes at row {row}")]
    InvalidLabel { row: usize, label: usize, classes: usize },
    #[error("parameter {index} has no gradient")]
    MissingGradient { index: usize },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is zero")]
    ZeroMatrix,
}

/// Handle to a record on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Spmm { input: Var, prop: Arc<PropMatrix> },
    /// `sparse_a`: the left operand is a mostly-zero constant.
    Matmul { a: Var, b: Var, sparse_a: bool },
    Relu { input: Var },
    AddScaled { a: Var, b: Var, ca: f64, cb: f64 },
    IdentityMix { h: Var, w: Var, beta: f64 },
    AddRowBias { input: Var, bias: Var },
    /// `keep[i]` entries are scaled by `scale`, the rest zeroed.
    Dropout { input: Var, keep: Vec<bool>, scale: f64 },
    LogSoftmaxRows { input: Var },
    NllLoss { input: Var, targets: Vec<(usize, usize)> },
}

#[derive(Debug)]
struct Record {
    value: Arc<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Operation log plus the dropout random stream.
#[derive(Debug)]
pub struct Tape {
    records: Vec<Record>,
    grads: Vec<Option<Matrix>>,
    rng: ChaCha8Rng,
}

fn check_finite(op: &'static str, m: &Matrix) -> Result<(), TensorError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<(), TensorError> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        })
    }
}

// Constant left operands below this density skip their zeros in matmul.
const SPARSE_DENSITY: f64 = 0.1;
const SPARSE_MIN_LEN: usize = 4096;

fn accumulate(slot: &mut Option<Matrix>, contribution: Matrix) {
    match slot {
        Some(g) => g.add_assign_scaled(&contribution, 1.0),
        None => *slot = Some(contribution),
    }
}

/// `slot += scale * contribution`, copying on first use instead of adding
/// to zeros.
fn accumulate_scaled(slot: &mut Option<Matrix>, contribution: &Matrix, scale: f64) {
    match slot {
        Some(g) => g.add_assign_scaled(contribution, scale),
        None => *slot = Some(contribution.map(|v| scale * v)),
    }
}

fn slot_or_zeros(slot: &mut Option<Matrix>, rows: usize, cols: usize) -> &mut Matrix {
    slot.get_or_insert_with(|| Matrix::zeros(rows, cols))
}

impl Tape {
    /// Empty tape whose dropout masks come from `rng`.
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self {
            records: Vec::new(),
            grads: Vec::new(),
            rng,
        }
    }

    /// Drops all records and gradients; the random stream carries on.
    pub fn clear(&mut self) {
        self.records.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.records.push(Record {
            value: Arc::new(value),
            requires_grad,
            op,
        });
        Var(self.records.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.records[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Leaf sharing an existing buffer, without gradient.
    pub fn constant_shared(&mut self, value: Arc<Matrix>) -> Var {
        self.records.push(Record {
            value,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.records.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.records[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.records[v.0].value.shape()
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// `P̃ h`.
    pub fn spmm(&mut self, prop: &Arc<PropMatrix>, h: Var) -> Result<Var, TensorError> {
        let x = self.value(h);
        if x.rows() != prop.dim() {
            return Err(TensorError::ShapeMismatch {
                op: "spmm",
                left: (prop.dim(), prop.dim()),
                right: x.shape(),
            });
        }
        let out = prop.multiply(x);
        check_finite("spmm", &out)?;
        let rg = self.needs(h);
        Ok(self.push(
            out,
            rg,
            Op::Spmm {
                input: h,
                prop: Arc::clone(prop),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: x.shape(),
                right: y.shape(),
            });
        }
        let sparse_a = !self.needs(a) && x.len() >= SPARSE_MIN_LEN && x.density() < SPARSE_DENSITY;
        let out = if sparse_a {
            let mut out = Matrix::zeros(x.rows(), y.cols());
            x.sparse_left_matmul_into(y, &mut out);
            out
        } else {
            x.matmul(y)
        };
        check_finite("matmul", &out)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Matmul { a, b, sparse_a }))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, h: Var) -> Result<Var, TensorError> {
        let out = self.value(h).map(|v| if v > 0.0 { v } else { 0.0 });
        check_finite("relu", &out)?;
        let rg = self.needs(h);
        Ok(self.push(out, rg, Op::Relu { input: h }))
    }

    /// `ca * a + cb * b`.
    pub fn add_scaled(&mut self, a: Var, b: Var, ca: f64, cb: f64) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add_scaled", x, y)?;
        let data = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, q)| ca * p + cb * q)
            .collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data).expect("shape preserved");
        check_finite("add_scaled", &out)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::AddScaled { a, b, ca, cb }))
    }

    /// `(1 - beta) h + beta (h w)` for square `w`.
    pub fn identity_mix(&mut self, h: Var, w: Var, beta: f64) -> Result<Var, TensorError> {
        let (x, wm) = (self.value(h), self.value(w));
        if wm.rows() != wm.cols() || x.cols() != wm.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "identity_mix",
                left: x.shape(),
                right: wm.shape(),
            });
        }
        let mut out = x.clone();
        out.scale_in_place(1.0 - beta);
        gemm(beta, x, false, wm, false, 1.0, &mut out);
        check_finite("identity_mix", &out)?;
        let rg = self.needs(h) || self.needs(w);
        Ok(self.push(out, rg, Op::IdentityMix { h, w, beta }))
    }

    /// Adds the `1 x cols` row vector `bias` to every row of `h`.
    pub fn add_row_bias(&mut self, h: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(h), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: x.shape(),
                right: b.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, bj) in out.row_mut(i).iter_mut().zip(b.as_slice()) {
                *o += bj;
            }
        }
        check_finite("add_row_bias", &out)?;
        let rg = self.needs(h) || self.needs(bias);
        Ok(self.push(out, rg, Op::AddRowBias { input: h, bias }))
    }

    /// Inverted dropout. In evaluation mode, or with `rate == 0`, this
    /// returns `h` itself.
    pub fn dropout(&mut self, h: Var, rate: f64, training: bool) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(h);
        }
        let scale = 1.0 / (1.0 - rate);
        // An entry is dropped when a uniform 32-bit draw falls below this.
        let threshold = (rate * 4294967296.0) as u64;
        let rg = self.needs(h);
        let x = Arc::clone(&self.records[h.0].value);
        if !rg {
            // Nothing flows back, and a zero stays zero whatever its mask
            // says, so only nonzero entries consume draws. Raw bag-of-words
            // features are mostly zeros.
            let out = x.map(|v| {
                if v != 0.0 && u64::from(self.rng.next_u32()) >= threshold {
                    v * scale
                } else {
                    0.0
                }
            });
            return Ok(self.push(out, false, Op::Dropout {
                input: h,
                keep: Vec::new(),
                scale,
            }));
        }
        let keep: Vec<bool> = (0..x.len())
            .map(|_| u64::from(self.rng.next_u32()) >= threshold)
            .collect();
        let data = x
            .as_slice()
            .iter()
            .zip(&keep)
            .map(|(v, &k)| if k { v * scale } else { 0.0 })
            .collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data).expect("shape preserved");
        Ok(self.push(out, rg, Op::Dropout { input: h, keep, scale }))
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax_rows(&mut self, h: Var) -> Result<Var, TensorError> {
        let x = self.value(h);
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
            let log_norm = max + libm::log(sum);
            row.iter_mut().for_each(|v| *v -= log_norm);
        }
        check_finite("log_softmax_rows", &out)?;
        let rg = self.needs(h);
        Ok(self.push(out, rg, Op::LogSoftmaxRows { input: h }))
    }

    /// Mean of `-logp[i, labels[i]]` over the rows in `mask`.
    pub fn nll_loss(&mut self, logp: Var, labels: &[usize], mask: &[usize]) -> Result<Var, TensorError> {
        if mask.is_empty() {
            return Err(TensorError::EmptyMask);
        }
        let x = self.value(logp);
        let mut targets = Vec::with_capacity(mask.len());
        let mut total = 0.0;
        for &row in mask {
            if row >= x.rows() || row >= labels.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "nll_loss",
                    left: x.shape(),
                    right: (row, 0),
                });
            }
            let label = labels[row];
            if label >= x.cols() {
                return Err(TensorError::InvalidLabel {
                    row,
                    label,
                    classes: x.cols(),
                });
            }
            total -= x.get(row, label);
            targets.push((row, label));
        }
        let out = Matrix::filled(1, 1, total / mask.len() as f64);
        check_finite("nll_loss", &out)?;
        let rg = self.needs(logp);
        Ok(self.push(out, rg, Op::NllLoss { input: logp, targets }))
    }

    /// Back-propagates from the scalar `loss`, replacing any earlier
    /// gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(TensorError::NonScalarLoss { rows, cols });
        }
        self.grads.clear();
        self.grads.resize_with(self.records.len(), || None);
        self.grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.records[idx].requires_grad {
                continue;
            }
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream);
            // Interior gradients are dropped as soon as they are consumed.
            if matches!(self.records[idx].op, Op::Leaf) {
                self.grads[idx] = Some(upstream);
            }
        }

        for g in self.grads.iter().flatten() {
            check_finite("backward", g)?;
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, dy: &Matrix) {
        let records = &self.records;
        let grads = &mut self.grads;
        let out = &records[idx].value;
        let needs = |v: Var| records[v.0].requires_grad;
        match &records[idx].op {
            Op::Leaf => {}
            Op::Spmm { input, prop } => {
                if needs(*input) {
                    // P̃ is symmetric, so P̃ᵀ dy = P̃ dy.
                    accumulate(&mut grads[input.0], prop.multiply(dy));
                }
            }
            Op::Matmul { a, b, sparse_a } => {
                let (av, bv) = (&records[a.0].value, &records[b.0].value);
                if needs(*a) {
                    let g = slot_or_zeros(&mut grads[a.0], av.rows(), av.cols());
                    gemm(1.0, dy, false, bv, true, 1.0, g);
                }
                if needs(*b) {
                    let g = slot_or_zeros(&mut grads[b.0], bv.rows(), bv.cols());
                    if *sparse_a {
                        av.sparse_left_tmatmul_into(dy, g);
                    } else {
                        gemm(1.0, av, true, dy, false, 1.0, g);
                    }
                }
            }
            Op::Relu { input } => {
                if needs(*input) {
                    let data = dy
                        .as_slice()
                        .iter()
                        .zip(out.as_slice())
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(
                        &mut grads[input.0],
                        Matrix::from_vec(dy.rows(), dy.cols(), data).expect("shape"),
                    );
                }
            }
            Op::AddScaled { a, b, ca, cb } => {
                for (v, c) in [(*a, *ca), (*b, *cb)] {
                    if needs(v) {
                        accumulate_scaled(&mut grads[v.0], dy, c);
                    }
                }
            }
            Op::IdentityMix { h, w, beta } => {
                let (hv, wv) = (&records[h.0].value, &records[w.0].value);
                if needs(*h) {
                    accumulate_scaled(&mut grads[h.0], dy, 1.0 - beta);
                    let g = grads[h.0].as_mut().expect("just accumulated");
                    gemm(*beta, dy, false, wv, true, 1.0, g);
                }
                if needs(*w) {
                    let g = slot_or_zeros(&mut grads[w.0], wv.rows(), wv.cols());
                    gemm(*beta, hv, true, dy, false, 1.0, g);
                }
            }
            Op::AddRowBias { input, bias } => {
                if needs(*input) {
                    accumulate_scaled(&mut grads[input.0], dy, 1.0);
                }
                if needs(*bias) {
                    let mut col_sums = vec![0.0; dy.cols()];
                    for i in 0..dy.rows() {
                        for (s, v) in col_sums.iter_mut().zip(dy.row(i)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[bias.0], Matrix::from_vec(1, dy.cols(), col_sums).expect("shape"));
                }
            }
            Op::Dropout { input, keep, scale } => {
                if needs(*input) {
                    let data = dy
                        .as_slice()
                        .iter()
                        .zip(keep)
                        .map(|(g, &k)| if k { g * scale } else { 0.0 })
                        .collect();
                    accumulate(
                        &mut grads[input.0],
                        Matrix::from_vec(dy.rows(), dy.cols(), data).expect("shape"),
                    );
                }
            }
            Op::LogSoftmaxRows { input } => {
                if needs(*input) {
                    let mut dx = dy.clone();
                    for i in 0..dx.rows() {
                        let total: f64 = dy.row(i).iter().sum();
                        for (d, y) in dx.row_mut(i).iter_mut().zip(out.row(i)) {
                            *d -= libm::exp(*y) * total;
                        }
                    }
                    accumulate(&mut grads[input.0], dx);
                }
            }
            Op::NllLoss { input, targets } => {
                if needs(*input) {
                    let x = &records[input.0].value;
                    let scale = -dy.get(0, 0) / targets.len() as f64;
                    let g = slot_or_zeros(&mut grads[input.0], x.rows(), x.cols());
                    for &(row, label) in targets {
                        let cur = g.get(row, label);
                        g.set(row, label, cur + scale);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::graph::{load_graph, renormalized_operator, CsrGraph};
    use crate::rng;

    fn tape() -> Tape {
        Tape::new(rng::stream(0, rng::STREAM_DROPOUT))
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, 9);
        Matrix::from_fn(rows, cols, |_, _| r.random::<f64>() * 2.0 - 1.0)
    }

    /// Central differences of `f` around `x`.
    fn numeric_grad(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let step = 1e-5;
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut plus = x.clone();
                plus.set(i, j, x.get(i, j) + step);
                let mut minus = x.clone();
                minus.set(i, j, x.get(i, j) - step);
                g.set(i, j, (f(&plus) - f(&minus)) / (2.0 * step));
            }
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / f64::max(1e-8, a.abs().max(b.abs()))
    }

    /// Sum of all entries as a differentiable scalar: ones(1,r) * m * ones(c,1).
    fn sum_all(t: &mut Tape, m: Var) -> Var {
        let (r, c) = t.shape(m);
        let left = t.constant(Matrix::filled(1, r, 1.0));
        let right = t.constant(Matrix::filled(c, 1, 1.0));
        let lm = t.matmul(left, m).unwrap();
        t.matmul(lm, right).unwrap()
    }

    #[test]
    fn spmm_examples() {
        let mut t = tape();
        let iso = Arc::new(renormalized_operator(&CsrGraph::empty(3)));
        let h = random_matrix(3, 4, 1);
        let hv = t.constant(h.clone());
        let out = t.spmm(&iso, hv).unwrap();
        assert_eq!(t.value(out), &h);

        let edge = Arc::new(renormalized_operator(&load_graph(&[(0, 1)], 2).unwrap()));
        let i2 = t.constant(Matrix::identity(2));
        let out = t.spmm(&edge, i2).unwrap();
        assert_eq!(t.value(out), &Matrix::filled(2, 2, 0.5));

        let bad = t.constant(Matrix::zeros(3, 1));
        assert!(matches!(t.spmm(&edge, bad), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn matmul_examples_and_gradient() {
        let mut t = tape();
        let a = random_matrix(5, 4, 2);
        let av = t.constant(a.clone());
        let id = t.constant(Matrix::identity(4));
        let out = t.matmul(av, id).unwrap();
        assert_eq!(t.value(out), &a);

        let three = t.constant(Matrix::filled(1, 1, 3.0));
        let four = t.constant(Matrix::filled(1, 1, 4.0));
        let p = t.matmul(three, four).unwrap();
        assert_eq!(t.value(p).get(0, 0), 12.0);
        assert!(t.matmul(av, three).is_err());

        let b = random_matrix(4, 3, 3);
        let mut t = tape();
        let av = t.param(a.clone());
        let bv = t.constant(b.clone());
        let c = t.matmul(av, bv).unwrap();
        let s = sum_all(&mut t, c);
        t.backward(s).unwrap();
        let fd = numeric_grad(&a, |x| x.matmul(&b).sum());
        let g = t.grad(av).unwrap();
        for (x, y) in g.as_slice().iter().zip(fd.as_slice()) {
            assert!(rel_err(*x, *y) <= 1e-4);
        }
    }

    #[test]
    fn relu_examples() {
        let mut t = tape();
        let h = t.constant(Matrix::from_rows(&[&[-1.0, 0.0, 2.0]]).unwrap());
        let r = t.relu(h).unwrap();
        assert_eq!(t.value(r).as_slice(), &[0.0, 0.0, 2.0]);
        let pos = Matrix::from_fn(3, 3, |i, j| (i * j) as f64);
        let p = t.constant(pos.clone());
        let r = t.relu(p).unwrap();
        assert_eq!(t.value(r), &pos);
    }

    #[test]
    fn relu_gradient_away_from_kinks() {
        let x = random_matrix(4, 5, 4);
        let mut t = tape();
        let xv = t.param(x.clone());
        let r = t.relu(xv).unwrap();
        let s = sum_all(&mut t, r);
        t.backward(s).unwrap();
        let fd = numeric_grad(&x, |m| m.as_slice().iter().map(|v| v.max(0.0)).sum());
        let g = t.grad(xv).unwrap();
        for k in 0..x.len() {
            if x.as_slice()[k].abs() < 1e-3 {
                continue;
            }
            assert!(rel_err(g.as_slice()[k], fd.as_slice()[k]) <= 1e-4);
        }
    }

    #[test]
    fn add_scaled_examples() {
        let a = random_matrix(3, 3, 5);
        let b = random_matrix(3, 3, 6);
        let mut t = tape();
        let (av, bv) = (t.constant(a.clone()), t.constant(b.clone()));
        let x = t.add_scaled(av, bv, 1.0, 0.0).unwrap();
        assert_eq!(t.value(x), &a);
        let y = t.add_scaled(av, av, 0.5, 0.5).unwrap();
        assert_eq!(t.value(y), &a);
        let z = t.add_scaled(av, bv, 0.9, 0.1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.value(z).get(i, j), 0.9 * a.get(i, j) + 0.1 * b.get(i, j));
            }
        }
        let wrong = t.constant(Matrix::zeros(2, 3));
        assert!(t.add_scaled(av, wrong, 1.0, 1.0).is_err());
    }

    #[test]
    fn identity_mix_examples() {
        let h = random_matrix(4, 3, 7);
        let w = random_matrix(3, 3, 8);
        let mut t = tape();
        let (hv, wv) = (t.constant(h.clone()), t.constant(w.clone()));
        let zero = t.identity_mix(hv, wv, 0.0).unwrap();
        assert_eq!(t.value(zero), &h);
        let one = t.identity_mix(hv, wv, 1.0).unwrap();
        assert!(t.value(one).max_abs_diff(&h.matmul(&w)) < 1e-15);
        let id = t.constant(Matrix::identity(3));
        let half = t.identity_mix(hv, id, 0.5).unwrap();
        assert!(t.value(half).max_abs_diff(&h) < 1e-15);
        let rect = t.constant(Matrix::zeros(3, 2));
        assert!(t.identity_mix(hv, rect, 0.5).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut t = tape();
        let h = t.constant(random_matrix(3, 3, 9));
        assert_eq!(t.dropout(h, 0.5, false).unwrap(), h);
        assert_eq!(t.dropout(h, 0.0, true).unwrap(), h);
        assert!(matches!(t.dropout(h, 1.0, true), Err(TensorError::InvalidRate(_))));
    }

    #[test]
    fn dropout_mean_within_three_sigma() {
        let n = 100_000;
        let mut t = tape();
        let ones = t.constant(Matrix::filled(1, n, 1.0));
        let d = t.dropout(ones, 0.5, true).unwrap();
        let values = t.value(d).as_slice();
        assert!(values.iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = values.iter().sum::<f64>() / n as f64;
        // each entry is 2 * Bernoulli(0.5): variance 1.
        let sigma = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn log_softmax_examples() {
        let mut t = tape();
        let h = t.constant(Matrix::from_rows(&[&[0.0, 0.0], &[1000.0, 0.0]]).unwrap());
        let y = t.log_softmax_rows(h).unwrap();
        let v = t.value(y);
        let ln2 = core::f64::consts::LN_2;
        assert!((v.get(0, 0) + ln2).abs() < 1e-15 && (v.get(0, 1) + ln2).abs() < 1e-15);
        assert!(v.get(1, 0).abs() < 1e-12);
        assert!((v.get(1, 1) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn sparse_constant_matmul_matches_dense() {
        // 100 x 60 with ~5% nonzeros takes the zero-skipping path.
        let mut r = rng::stream(3, 9);
        let x = Matrix::from_fn(100, 60, |_, _| {
            if r.random::<f64>() < 0.05 {
                r.random::<f64>()
            } else {
                0.0
            }
        });
        let w = random_matrix(60, 7, 4);
        let labels: Vec<usize> = (0..100).map(|i| i % 7).collect();
        let mask: Vec<usize> = (0..100).step_by(3).collect();
        let run = |sparse: bool| {
            let mut t = tape();
            let xv = if sparse { t.constant(x.clone()) } else { t.param(x.clone()) };
            let wv = t.param(w.clone());
            let y = t.matmul(xv, wv).unwrap();
            let lp = t.log_softmax_rows(y).unwrap();
            let loss = t.nll_loss(lp, &labels, &mask).unwrap();
            t.backward(loss).unwrap();
            let is_sparse = matches!(t.records[y.0].op, Op::Matmul { sparse_a: true, .. });
            (t.value(y).clone(), t.grad(wv).unwrap().clone(), is_sparse)
        };
        let (ys, gs, sparse) = run(true);
        let (yd, gd, dense_sparse) = run(false);
        assert!(sparse && !dense_sparse);
        assert!(ys.max_abs_diff(&yd) < 1e-12);
        assert!(gs.max_abs_diff(&gd) < 1e-12);
    }

    #[test]
    fn nll_loss_examples() {
        let mut t = tape();
        let perfect = t.constant(Matrix::from_rows(&[&[0.0, -1e9], &[-1e9, 0.0]]).unwrap());
        let l = t.nll_loss(perfect, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(t.value(l).get(0, 0), 0.0);

        let c = 5;
        let uniform = t.constant(Matrix::filled(3, c, -(c as f64).ln()));
        let l = t.nll_loss(uniform, &[0, 3, 4], &[0, 1, 2]).unwrap();
        assert!((t.value(l).get(0, 0) - (c as f64).ln()).abs() < 1e-15);

        assert_eq!(t.nll_loss(uniform, &[0, 1, 2], &[]), Err(TensorError::EmptyMask));
        assert!(matches!(
            t.nll_loss(uniform, &[9, 1, 2], &[0]),
            Err(TensorError::InvalidLabel { .. })
        ));

        let x = random_matrix(6, 3, 10);
        let labels = [2, 0, 1, 1, 0, 2];
        let mask = [0, 2, 5];
        let xv = t.constant(x.clone());
        let l = t.nll_loss(xv, &labels, &mask).unwrap();
        let mut want = 0.0;
        for &i in &mask {
            want -= x.get(i, labels[i]);
        }
        want /= mask.len() as f64;
        assert!((t.value(l).get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut t = tape();
        let a = t.constant(Matrix::filled(1, 1, f64::MAX));
        assert_eq!(
            t.add_scaled(a, a, 2.0, 2.0),
            Err(TensorError::NonFinite { op: "add_scaled" })
        );
    }

    #[test]
    fn backward_requires_scalar_and_accumulates_over_reuse() {
        let mut t = tape();
        let x = t.param(Matrix::filled(1, 1, 3.0));
        let y = t.matmul(x, x).unwrap();
        let z = t.add_scaled(y, x, 1.0, 1.0).unwrap();
        t.backward(z).unwrap();
        // d(x² + x)/dx = 2x + 1
        assert_eq!(t.grad(x).unwrap().get(0, 0), 7.0);

        let m = t.param(Matrix::zeros(2, 2));
        assert_eq!(t.backward(m), Err(TensorError::NonScalarLoss { rows: 2, cols: 2 }));
    }

    #[test]
    fn clear_keeps_random_stream_moving() {
        let mut t = tape();
        let ones = t.constant(Matrix::filled(1, 64, 1.0));
        let a = t.dropout(ones, 0.5, true).unwrap();
        let first = t.value(a).clone();
        t.clear();
        let ones = t.constant(Matrix::filled(1, 64, 1.0));
        let b = t.dropout(ones, 0.5, true).unwrap();
        assert_ne!(&first, t.value(b));
    }
}
