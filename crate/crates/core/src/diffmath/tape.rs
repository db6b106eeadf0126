//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding
//! its output value. [`Tape::backward`] walks the nodes in reverse and
//! accumulates vector-Jacobian products. Nodes built only from constants are
//! never differentiated.

use std::collections::BTreeMap;
use std::rc::Rc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Floor applied to row norms inside [`Tape::normalize_rows`].
pub const NORM_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulCol(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Powf(Var, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    NormalizeRows { x: Var, norms: Vec<f64> },
    RowDot(Var, Var),
    LogSumExpRows(Var),
    SoftmaxRows(Var),
    Diag(Var),
    GatherMean { src: Var, groups: Rc<Vec<Vec<usize>>> },
    WeightedBce { p: Var, target: Rc<Tensor>, weight: Rc<Tensor>, total: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording context for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    named: Vec<(String, Var)>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
    named: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }

    /// Gradients of every named parameter on the tape.
    pub fn named(&self) -> BTreeMap<String, Tensor> {
        self.named
            .iter()
            .map(|(name, v)| (name.clone(), self.wrt(*v)))
            .collect()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) const BCE_CLIP: f64 = 1e-7;

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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
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

    fn push_checked(&mut self, name: &'static str, value: Tensor, op: Op, rg: bool) -> Result<Var> {
        value.check_finite(name)?;
        Ok(self.push(value, op, rg))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable input without a name.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Differentiable input reported under `name` by [`Gradients::named`].
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        let v = self.leaf(value);
        self.named.push((name.into(), v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, true)
    }

    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let k_a = if ta { av.rows() } else { av.cols() };
        let k_b = if tb { bv.cols() } else { bv.rows() };
        if k_a != k_b {
            return Err(Error::shape(
                "matmul",
                format!("{:?}{} times {:?}{}", av.shape(), if ta { "ᵀ" } else { "" }, bv.shape(), if tb { "ᵀ" } else { "" }),
            ));
        }
        let out = gemm(av, ta, bv, tb);
        let rg = self.rg(&[a, b]);
        self.push_checked("matmul", out, Op::MatMul { a, b, ta, tb }, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push_checked("add", out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push_checked("sub", out, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push_checked("mul", out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).scale(c);
        let rg = self.rg(&[a]);
        self.push_checked("scale", out, Op::Scale(a, c), rg)
    }

    /// Adds the `1 x m` row vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::shape("add_row", format!("{:?} + row {:?}", av.shape(), bv.shape())));
        }
        let out = Tensor::from_fn(av.rows(), av.cols(), |i, j| av.get(i, j) + bv.get(0, j));
        let rg = self.rg(&[a, b]);
        self.push_checked("add_row", out, Op::AddRow(a, b), rg)
    }

    /// Scales row `i` of `a` by `v[i]` for an `n x 1` column `v`.
    pub fn mul_col(&mut self, a: Var, v: Var) -> Result<Var> {
        let (av, vv) = (self.value(a), self.value(v));
        if vv.cols() != 1 || vv.rows() != av.rows() {
            return Err(Error::shape("mul_col", format!("{:?} * col {:?}", av.shape(), vv.shape())));
        }
        let out = Tensor::from_fn(av.rows(), av.cols(), |i, j| av.get(i, j) * vv.get(i, 0));
        let rg = self.rg(&[a, v]);
        self.push_checked("mul_col", out, Op::MulCol(a, v), rg)
    }

    /// Scales column `j` of `a` by `v[j]` for a `1 x m` row `v`.
    pub fn mul_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (av, vv) = (self.value(a), self.value(v));
        if vv.rows() != 1 || vv.cols() != av.cols() {
            return Err(Error::shape("mul_row", format!("{:?} * row {:?}", av.shape(), vv.shape())));
        }
        let out = Tensor::from_fn(av.rows(), av.cols(), |i, j| av.get(i, j) * vv.get(0, j));
        let rg = self.rg(&[a, v]);
        self.push_checked("mul_row", out, Op::MulRow(a, v), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push_checked(name, out, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary("ln", a, f64::ln, Op::Ln(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        self.unary("powf", a, |x| x.powf(p), Op::Powf(a, p))
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    /// Mean of all entries, as `1 x 1`.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Mean(a), rg))
    }

    /// Row sums, as `n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::from_fn(v.rows(), 1, |i, _| v.row(i).iter().sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::RowSum(a), rg)
    }

    /// Divides each row by its Euclidean norm (floored at [`NORM_FLOOR`]).
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let norms: Vec<f64> = (0..v.rows())
            .map(|i| v.row(i).iter().map(|a| a * a).sum::<f64>().sqrt().max(NORM_FLOOR))
            .collect();
        let out = Tensor::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) / norms[i]);
        let rg = self.rg(&[x]);
        self.push(out, Op::NormalizeRows { x, norms }, rg)
    }

    /// Per-row dot products, as `n x 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("row_dot", self.value(a), self.value(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = Tensor::from_fn(av.rows(), 1, |i, _| {
            av.row(i).iter().zip(bv.row(i)).map(|(x, y)| x * y).sum()
        });
        let rg = self.rg(&[a, b]);
        self.push_checked("row_dot", out, Op::RowDot(a, b), rg)
    }

    /// Row-wise `log Σ exp`, as `n x 1`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let out = Tensor::from_fn(v.rows(), 1, |i, _| {
            let row = v.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        });
        let rg = self.rg(&[a]);
        self.push_checked("logsumexp_rows", out, Op::LogSumExpRows(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let mut out = v.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        let rg = self.rg(&[a]);
        self.push_checked("softmax_rows", out, Op::SoftmaxRows(a), rg)
    }

    /// Diagonal of a square matrix, as `n x 1`.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rows() != v.cols() {
            return Err(Error::shape("diag", format!("{:?} is not square", v.shape())));
        }
        let out = Tensor::from_fn(v.rows(), 1, |i, _| v.get(i, i));
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Diag(a), rg))
    }

    /// Output row `g` is the mean of the `src` rows listed in `groups[g]`.
    pub fn gather_mean(&mut self, src: Var, groups: Rc<Vec<Vec<usize>>>) -> Result<Var> {
        let v = self.value(src);
        let mut out = Tensor::zeros(groups.len(), v.cols());
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::shape("gather_mean", format!("group {g} is empty")));
            }
            let w = 1.0 / members.len() as f64;
            for &i in members {
                if i >= v.rows() {
                    return Err(Error::shape("gather_mean", format!("row {i} out of {}", v.rows())));
                }
                for (o, x) in out.row_mut(g).iter_mut().zip(v.row(i)) {
                    *o += w * x;
                }
            }
        }
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::GatherMean { src, groups }, rg))
    }

    /// `Σ wᵢ·bce(pᵢ, tᵢ) / Σ wᵢ` with probabilities clipped to
    /// `[1e-7, 1 - 1e-7]`. Clipped entries pass no gradient.
    pub fn weighted_bce(&mut self, p: Var, target: Rc<Tensor>, weight: Rc<Tensor>) -> Result<Var> {
        let pv = self.value(p);
        same_shape("weighted_bce", pv, &target)?;
        same_shape("weighted_bce", pv, &weight)?;
        let total = weight.sum();
        if total <= 0.0 {
            return Err(Error::degenerate("weighted_bce", "weights sum to zero"));
        }
        let mut acc = 0.0;
        for ((&prob, &t), &w) in pv.data().iter().zip(target.data()).zip(weight.data()) {
            if w == 0.0 {
                continue;
            }
            let pc = prob.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
            acc -= w * (t * pc.ln() + (1.0 - t) * (1.0 - pc).ln());
        }
        let out = Tensor::scalar(acc / total);
        let rg = self.rg(&[p]);
        self.push_checked("weighted_bce", out, Op::WeightedBce { p, target, weight, total }, rg)
    }

    /// Reverse-mode sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("backward", format!("loss has shape {:?}", lv.shape())));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            named: self.named.clone(),
        })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, contrib: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let want = |v: Var| self.nodes[v.0].requires_grad;

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                if want(a) {
                    let da = if ta { gemm(val(b), tb, g, true) } else { gemm(g, false, val(b), !tb) };
                    acc(a, da);
                }
                if want(b) {
                    let db = if tb { gemm(g, true, val(a), ta) } else { gemm(val(a), !ta, g, false) };
                    acc(b, db);
                }
            }
            &Op::Transpose(a) => acc(a, g.transpose()),
            &Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            &Op::Sub(a, b) => {
                acc(a, g.clone());
                if want(b) {
                    acc(b, g.scale(-1.0));
                }
            }
            &Op::Mul(a, b) => {
                if want(a) {
                    acc(a, g.zip_map(val(b), |x, y| x * y));
                }
                if want(b) {
                    acc(b, g.zip_map(val(a), |x, y| x * y));
                }
            }
            &Op::Scale(a, c) => acc(a, g.scale(c)),
            &Op::AddRow(a, b) => {
                acc(a, g.clone());
                if want(b) {
                    let db = Tensor::from_fn(1, g.cols(), |_, j| (0..g.rows()).map(|i| g.get(i, j)).sum());
                    acc(b, db);
                }
            }
            &Op::MulCol(a, v) => {
                let (av, vv) = (val(a), val(v));
                if want(a) {
                    acc(a, Tensor::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * vv.get(i, 0)));
                }
                if want(v) {
                    acc(v, Tensor::from_fn(g.rows(), 1, |i, _| {
                        g.row(i).iter().zip(av.row(i)).map(|(x, y)| x * y).sum()
                    }));
                }
            }
            &Op::MulRow(a, v) => {
                let (av, vv) = (val(a), val(v));
                if want(a) {
                    acc(a, Tensor::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * vv.get(0, j)));
                }
                if want(v) {
                    let mut dv = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            dv.data_mut()[j] += g.get(i, j) * av.get(i, j);
                        }
                    }
                    acc(v, dv);
                }
            }
            &Op::Relu(a) => acc(a, g.zip_map(val(a), |gi, x| if x > 0.0 { gi } else { 0.0 })),
            &Op::Sigmoid(a) => acc(a, g.zip_map(out, |gi, y| gi * y * (1.0 - y))),
            &Op::Softplus(a) => acc(a, g.zip_map(val(a), |gi, x| gi * sigmoid(x))),
            &Op::Exp(a) => acc(a, g.zip_map(out, |gi, y| gi * y)),
            &Op::Ln(a) => acc(a, g.zip_map(val(a), |gi, x| gi / x)),
            &Op::Powf(a, p) => acc(a, g.zip_map(val(a), |gi, x| gi * p * x.powf(p - 1.0))),
            &Op::Sum(a) => {
                let (r, c) = val(a).shape();
                acc(a, Tensor::filled(r, c, g.item()));
            }
            &Op::Mean(a) => {
                let (r, c) = val(a).shape();
                acc(a, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            &Op::RowSum(a) => {
                let (r, c) = val(a).shape();
                acc(a, Tensor::from_fn(r, c, |i, _| g.get(i, 0)));
            }
            Op::NormalizeRows { x, norms } => {
                let mut dx = Tensor::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let y = out.row(i);
                    let gi = g.row(i);
                    let n = norms[i];
                    let raw_norm = val(*x).row(i).iter().map(|a| a * a).sum::<f64>().sqrt();
                    let row = dx.row_mut(i);
                    if raw_norm > NORM_FLOOR {
                        let yg: f64 = y.iter().zip(gi).map(|(a, b)| a * b).sum();
                        for ((d, &gv), &yv) in row.iter_mut().zip(gi).zip(y) {
                            *d = (gv - yv * yg) / n;
                        }
                    } else {
                        for (d, &gv) in row.iter_mut().zip(gi) {
                            *d = gv / n;
                        }
                    }
                }
                acc(*x, dx);
            }
            &Op::RowDot(a, b) => {
                let (av, bv) = (val(a), val(b));
                if want(a) {
                    acc(a, Tensor::from_fn(av.rows(), av.cols(), |i, j| g.get(i, 0) * bv.get(i, j)));
                }
                if want(b) {
                    acc(b, Tensor::from_fn(bv.rows(), bv.cols(), |i, j| g.get(i, 0) * av.get(i, j)));
                }
            }
            &Op::LogSumExpRows(a) => {
                let av = val(a);
                acc(a, Tensor::from_fn(av.rows(), av.cols(), |i, j| {
                    g.get(i, 0) * (av.get(i, j) - out.get(i, 0)).exp()
                }));
            }
            &Op::SoftmaxRows(a) => {
                let mut dx = Tensor::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let y = out.row(i);
                    let gi = g.row(i);
                    let dot: f64 = y.iter().zip(gi).map(|(p, q)| p * q).sum();
                    for ((d, &yv), &gv) in dx.row_mut(i).iter_mut().zip(y).zip(gi) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(a, dx);
            }
            &Op::Diag(a) => {
                let n = out.rows();
                let mut da = Tensor::zeros(n, n);
                for i in 0..n {
                    da.set(i, i, g.get(i, 0));
                }
                acc(a, da);
            }
            Op::GatherMean { src, groups } => {
                let (r, c) = val(*src).shape();
                let mut ds = Tensor::zeros(r, c);
                for (gi, members) in groups.iter().enumerate() {
                    let w = 1.0 / members.len() as f64;
                    for &i in members {
                        for (d, x) in ds.row_mut(i).iter_mut().zip(g.row(gi)) {
                            *d += w * x;
                        }
                    }
                }
                acc(*src, ds);
            }
            Op::WeightedBce { p, target, weight, total } => {
                let scale = g.item() / total;
                let pv = val(*p);
                let mut dp = Tensor::zeros(pv.rows(), pv.cols());
                for (k, d) in dp.data_mut().iter_mut().enumerate() {
                    let (prob, t, w) = (pv.data()[k], target.data()[k], weight.data()[k]);
                    if w == 0.0 || !(BCE_CLIP..=1.0 - BCE_CLIP).contains(&prob) {
                        continue;
                    }
                    *d = scale * w * (-t / prob + (1.0 - t) / (1.0 - prob));
                }
                acc(*p, dp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.param("w", Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let loss = tape.sum(w);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w), Tensor::ones(2, 2));
    }

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let w = tape.param("w", Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.named()["w"], Tensor::from_rows(&[[2.0, 4.0], [6.0, 8.0]]));
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let mut tape = Tape::new();
        let w = tape.param("w", Tensor::ones(2, 3));
        let u = tape.param("unused", Tensor::ones(3, 1));
        let loss = tape.sum(w);
        let g = tape.backward(loss).unwrap();
        assert!(!g.reached(u));
        assert_eq!(g.wrt(u), Tensor::zeros(3, 1));
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let w = tape.param("w", Tensor::ones(2, 2));
        assert!(matches!(tape.backward(w), Err(Error::Shape { .. })));
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::eye(2));
        let m = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let p = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(p), tape.value(m));

        let r = tape.constant(Tensor::from_rows(&[[1.0, 0.0]]));
        let c = tape.constant(Tensor::from_rows(&[[2.0], [3.0]]));
        let s = tape.matmul(r, c).unwrap();
        assert_eq!(tape.value(s).item(), 2.0);
        assert!(tape.matmul(r, r).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
