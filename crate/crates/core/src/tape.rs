//! Minimal reverse-mode autodiff over 2-D arrays.
//!
//! A [`Tape`] records an eager forward computation; [`Tape::backward`]
//! replays it in reverse, accumulating gradients. All tensors are
//! `Array2<S>` with rows as items and columns as features; scalars are
//! `1x1`. The op set is exactly what the encoder and prediction heads need.

use ndarray::{Array2, Axis};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<S: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// `a: [n, m]` plus a `[1, m]` row broadcast over all rows.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Relu(Var),
    /// Row-wise softmax.
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    /// Row-wise softmax cross-entropy against fixed target distributions,
    /// weighted per row and summed. Target rows must sum to 1 where the
    /// weight is nonzero.
    CeRows { logits: Var, targets: Array2<S>, weights: Vec<S> },
    /// Element-wise binary cross-entropy with logits, weighted and summed.
    BceSum { logits: Var, targets: Array2<S>, weights: Array2<S> },
}

struct Node<S: Scalar> {
    value: Array2<S>,
    op: Op<S>,
    needs_grad: bool,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Array2<S>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<S> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> S {
        let value = self.value(v);
        assert_eq!(value.dim(), (1, 1), "expected a scalar node");
        value[(0, 0)]
    }

    /// Gradient of the last `backward` target w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<&Array2<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Array2<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Array2<S>, trainable: bool) -> Var {
        self.push(value, Op::Leaf, trainable)
    }

    pub fn constant(&mut self, value: Array2<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.value(a).dim();
        let (rb, cb) = self.value(b).dim();
        assert_eq!(ca, rb, "matmul shape mismatch: ({ra},{ca}) x ({rb},{cb})");
        let value = self.value(a).dot(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let needs = self.needs(a);
        self.push(value, Op::Transpose(a), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (_, ca) = self.value(a).dim();
        assert_eq!(self.value(b).dim(), (1, ca), "add_row expects a [1, cols] bias");
        let value = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::AddRow(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), needs)
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let value = self.value(a).mapv(|x| x * c);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| if x > S::zero() { x } else { S::zero() });
        let needs = self.needs(a);
        self.push(value, Op::Relu(a), needs)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let needs = self.needs(a);
        self.push(value, Op::Softmax(a), needs)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (_, cols) = self.value(x).dim();
        assert_eq!(self.value(gain).dim(), (1, cols), "layer_norm gain shape");
        assert_eq!(self.value(bias).dim(), (1, cols), "layer_norm bias shape");
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            let (xhat, _) = normalize_row(&row.to_owned());
            row.assign(&xhat);
        }
        let value = &value * self.value(gain) + self.value(bias);
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(value, Op::LayerNorm { x, gain, bias }, needs)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, _) = self.value(a).dim();
        let (rb, _) = self.value(b).dim();
        assert_eq!(ra, rb, "concat_cols row mismatch");
        let value = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat_cols");
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::ConcatCols(a, b), needs)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows");
        let needs = parts.iter().any(|&v| self.needs(v));
        self.push(value, Op::ConcatRows(parts.to_vec()), needs)
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let (rows, cols) = self.value(a).dim();
        let mut value = Array2::zeros((indices.len(), cols));
        for (i, &idx) in indices.iter().enumerate() {
            assert!(idx < rows, "gather_rows index {idx} out of {rows}");
            value.row_mut(i).assign(&self.value(a).row(idx));
        }
        let needs = self.needs(a);
        self.push(value, Op::GatherRows(a, indices.to_vec()), needs)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().copied().sum::<S>();
        let needs = self.needs(a);
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a), needs)
    }

    pub fn ce_rows(&mut self, logits: Var, targets: Array2<S>, weights: Vec<S>) -> Var {
        let (rows, cols) = self.value(logits).dim();
        assert_eq!(targets.dim(), (rows, cols), "ce_rows target shape");
        assert_eq!(weights.len(), rows, "ce_rows weights length");
        let mut total = S::zero();
        for (i, row) in self.value(logits).rows().into_iter().enumerate() {
            if weights[i] == S::zero() {
                continue;
            }
            let lse = log_sum_exp(row.iter().copied());
            let dot = row
                .iter()
                .zip(targets.row(i).iter())
                .map(|(&x, &t)| x * t)
                .sum::<S>();
            total = total + weights[i] * (lse - dot);
        }
        let needs = self.needs(logits);
        self.push(Array2::from_elem((1, 1), total), Op::CeRows { logits, targets, weights }, needs)
    }

    pub fn bce_sum(&mut self, logits: Var, targets: Array2<S>, weights: Array2<S>) -> Var {
        let dim = self.value(logits).dim();
        assert_eq!(targets.dim(), dim, "bce_sum target shape");
        assert_eq!(weights.dim(), dim, "bce_sum weights shape");
        let mut total = S::zero();
        for ((&x, &t), &w) in
            self.value(logits).iter().zip(targets.iter()).zip(weights.iter())
        {
            if w == S::zero() {
                continue;
            }
            // max(x, 0) - x*t + ln(1 + exp(-|x|)), the stable form.
            let loss = x.max(S::zero()) - x * t + (S::one() + (-x.abs()).exp()).ln();
            total = total + w * loss;
        }
        let needs = self.needs(logits);
        self.push(Array2::from_elem((1, 1), total), Op::BceSum { logits, targets, weights }, needs)
    }

    /// Backpropagates from a scalar node, filling gradients for every node
    /// that (transitively) depends on a trainable leaf.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward target must be a scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Array2::from_elem((1, 1), S::one()));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(grad) = self.grads[i].take() else { continue };
            self.propagate(i, &grad);
            self.grads[i] = Some(grad);
        }
    }

    fn accumulate(&mut self, v: Var, delta: &Array2<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => *g = &*g + delta,
            slot @ None => *slot = Some(delta.clone()),
        }
    }

    fn propagate(&mut self, idx: usize, grad: &Array2<S>) {
        // Ops are cheap to destructure; values are cloned only where the
        // backward formula needs an owned copy.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = grad.dot(&self.value(*b).t());
                let gb = self.value(*a).t().dot(grad);
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Transpose(a) => {
                let ga = grad.t().to_owned();
                self.accumulate(*a, &ga);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, grad);
                self.accumulate(*b, grad);
            }
            Op::AddRow(a, b) => {
                self.accumulate(*a, grad);
                let gb = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                self.accumulate(*b, &gb);
            }
            Op::Mul(a, b) => {
                let ga = grad * self.value(*b);
                let gb = grad * self.value(*a);
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Scale(a, c) => {
                let ga = grad.mapv(|x| x * *c);
                self.accumulate(*a, &ga);
            }
            Op::Relu(a) => {
                let mask = self.value(*a).mapv(|x| if x > S::zero() { S::one() } else { S::zero() });
                let ga = grad * &mask;
                self.accumulate(*a, &ga);
            }
            Op::Softmax(a) => {
                let y = self.nodes[idx].value.clone();
                let mut ga = grad * &y;
                for (mut ga_row, y_row) in ga.rows_mut().into_iter().zip(y.rows()) {
                    let dot = ga_row.iter().copied().sum::<S>();
                    ga_row.zip_mut_with(&y_row, |g, &yy| *g = *g - dot * yy);
                }
                self.accumulate(*a, &ga);
            }
            Op::LayerNorm { x, gain, bias } => {
                let xv = self.value(*x).clone();
                let gv = self.value(*gain).clone();
                let (rows, cols) = xv.dim();
                let n = S::from_usize(cols);
                let mut gx = Array2::zeros((rows, cols));
                let mut ggain = Array2::zeros((1, cols));
                let mut gbias = Array2::zeros((1, cols));
                for r in 0..rows {
                    let row = xv.row(r).to_owned();
                    let (xhat, istd) = normalize_row(&row);
                    let dy = grad.row(r);
                    let mut dyg = dy.to_owned();
                    dyg.zip_mut_with(&gv.row(0), |d, &g| *d = *d * g);
                    let mean_dyg = dyg.iter().copied().sum::<S>() / n;
                    let mean_dyg_xhat =
                        dyg.iter().zip(xhat.iter()).map(|(&d, &h)| d * h).sum::<S>() / n;
                    for c in 0..cols {
                        gx[(r, c)] = istd * (dyg[c] - mean_dyg - xhat[c] * mean_dyg_xhat);
                        ggain[(0, c)] = ggain[(0, c)] + dy[c] * xhat[c];
                        gbias[(0, c)] = gbias[(0, c)] + dy[c];
                    }
                }
                self.accumulate(*x, &gx);
                self.accumulate(*gain, &ggain);
                self.accumulate(*bias, &gbias);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).dim().1;
                let ga = grad.slice(ndarray::s![.., ..ca]).to_owned();
                let gb = grad.slice(ndarray::s![.., ca..]).to_owned();
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).dim().0;
                    let gp = grad.slice(ndarray::s![offset..offset + rows, ..]).to_owned();
                    self.accumulate(p, &gp);
                    offset += rows;
                }
            }
            Op::GatherRows(a, indices) => {
                let mut ga = Array2::zeros(self.value(*a).dim());
                for (i, &idx) in indices.iter().enumerate() {
                    ga.row_mut(idx).zip_mut_with(&grad.row(i), |g, &d| *g = *g + d);
                }
                self.accumulate(*a, &ga);
            }
            Op::SumAll(a) => {
                let ga = Array2::from_elem(self.value(*a).dim(), grad[(0, 0)]);
                self.accumulate(*a, &ga);
            }
            Op::CeRows { logits, targets, weights } => {
                let up = grad[(0, 0)];
                let mut glogits = softmax_rows(self.value(*logits));
                glogits.zip_mut_with(targets, |g, &t| *g = *g - t);
                for (r, mut row) in glogits.rows_mut().into_iter().enumerate() {
                    let w = weights[r] * up;
                    row.mapv_inplace(|x| x * w);
                }
                self.accumulate(*logits, &glogits);
            }
            Op::BceSum { logits, targets, weights } => {
                let up = grad[(0, 0)];
                let mut glogits = self.value(*logits).mapv(sigmoid);
                glogits.zip_mut_with(targets, |g, &t| *g = *g - t);
                glogits.zip_mut_with(weights, |g, &w| *g = *g * w * up);
                self.accumulate(*logits, &glogits);
            }
        }
        self.nodes[idx].op = op;
    }
}

fn softmax_rows<S: Scalar>(logits: &Array2<S>) -> Array2<S> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.iter().copied().sum::<S>();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn log_sum_exp<S: Scalar>(values: impl Iterator<Item = S> + Clone) -> S {
    let max = values.clone().fold(S::neg_infinity(), S::max);
    let sum = values.map(|x| (x - max).exp()).sum::<S>();
    max + sum.ln()
}

/// Returns `(xhat, 1/std)` for one layer-norm row.
fn normalize_row<S: Scalar>(row: &ndarray::Array1<S>) -> (ndarray::Array1<S>, S) {
    let n = S::from_usize(row.len());
    let eps = S::from_f64(1e-5);
    let mean = row.iter().copied().sum::<S>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    let istd = S::one() / (var + eps).sqrt();
    (row.mapv(|x| (x - mean) * istd), istd)
}
