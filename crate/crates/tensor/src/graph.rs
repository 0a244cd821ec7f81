use std::sync::Arc;

use crate::kernels::{dot, gemm_nn, gemm_nt, gemm_tn};
use crate::{Result, Tensor, TensorError};

/// Effective −∞ for additive attention masks. Softmax treats anything at or
/// below `MASK_NEG / 2` as masked and gives it exactly zero weight.
pub const MASK_NEG: f64 = f64::MIN;
const MASK_THRESHOLD: f64 = f64::MIN / 2.0;

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    BroadcastAdd(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Relu(Var),
    Square(Var),
    Ln(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    RepeatRows(Var),
    Row(Var, usize),
    Reshape(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::BroadcastAdd(..) => "broadcast_add",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Square(..) => "square",
            Op::Ln(..) => "ln",
            Op::Softplus(..) => "softplus",
            Op::Clamp(..) => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Concat(..) => "concat_lastdim",
            Op::SliceCols(..) => "slice_cols",
            Op::RepeatRows(..) => "repeat_rows",
            Op::Row(..) => "row",
            Op::Reshape(..) => "reshape",
            Op::Softmax(..) => "softmax_lastdim",
            Op::LayerNorm { .. } => "layer_norm",
        }
    }
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Eager tape. Nodes are appended in evaluation order, which is a valid
/// topological order; backward visits them in exact reverse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    masked_rows: usize,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
///
/// Only leaves that require grad (and the loss itself) keep their entries;
/// intermediate gradients are released as the sweep passes them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
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
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
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

    /// Softmax rows seen so far whose every entry was masked (emitted as
    /// all-zero padding rows).
    pub fn masked_rows(&self) -> usize {
        self.masked_rows
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.leaf_shared(Arc::new(t), requires_grad)
    }

    /// Registers a leaf without copying its buffer.
    pub fn leaf_shared(&mut self, t: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn mat_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        match *t.shape() {
            [r, c] => Ok((r, c)),
            _ => Err(TensorError::Shape {
                op,
                lhs: t.shape().to_vec(),
                rhs: vec![],
            }),
        }
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul")?;
        let (k2, n) = self.mat_dims(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", self.value(a), self.value(b)));
        }
        let c = gemm_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], c), Op::MatMul(a, b), &[a, b]))
    }

    /// `a[m×k] · b[n×k]ᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul_t")?;
        let (n, k2) = self.mat_dims(b, "matmul_t")?;
        if k != k2 {
            return Err(shape_err("matmul_t", self.value(a), self.value(b)));
        }
        let c = gemm_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], c), Op::MatMulT(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.value(a), self.value(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds vector `v[d]` to every row of `m[..×d]`.
    pub fn broadcast_add(&mut self, m: Var, v: Var) -> Result<Var> {
        let mt = self.value(m);
        let vt = self.value(v);
        let d = vt.len();
        let vector_like = vt.shape().len() == 1 || (vt.shape().len() == 2 && vt.shape()[0] == 1);
        if !vector_like || mt.shape().is_empty() || mt.last_dim() != d {
            return Err(shape_err("broadcast_add", mt, vt));
        }
        let mut data = mt.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for (x, y) in row.iter_mut().zip(vt.data()) {
                *x += y;
            }
        }
        let out = Tensor::from_parts(mt.shape().to_vec(), data);
        Ok(self.push(out, Op::BroadcastAdd(m, v), &[m, v]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a), &[a])
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a), &[a])
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Ln(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Concatenates along the last dimension; all parts share their leading
    /// dimensions.
    pub fn concat_lastdim(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Index {
            op: "concat_lastdim",
            index: 0,
            len: 0,
        })?;
        let rows = self.value(first).outer_len();
        let lead = {
            let s = self.shape(first);
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            let s = t.shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(shape_err("concat_lastdim", self.value(first), t));
            }
            widths.push(t.last_dim());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), parts))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.mat_dims(a, "slice_cols")?;
        if start + len > c {
            return Err(TensorError::Index {
                op: "slice_cols",
                index: start + len,
                len: c,
            });
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.row(i)[start..start + len]);
        }
        Ok(self.push(Tensor::from_parts(vec![r, len], data), Op::SliceCols(a, start), &[a]))
    }

    /// Tiles a vector `[d]` (or `[1×d]`) into `[n×d]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let t = self.value(a);
        let ok = t.shape().len() == 1 || (t.shape().len() == 2 && t.shape()[0] == 1);
        if !ok {
            return Err(TensorError::Shape {
                op: "repeat_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![n],
            });
        }
        let d = t.len();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::from_parts(vec![n, d], data), Op::RepeatRows(a), &[a]))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (r, c) = self.mat_dims(a, "row")?;
        if i >= r {
            return Err(TensorError::Index {
                op: "row",
                index: i,
                len: r,
            });
        }
        let data = self.value(a).row(i).to_vec();
        Ok(self.push(Tensor::from_parts(vec![c], data), Op::Row(a, i), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Max-stabilized softmax over the last dimension. Masked entries
    /// (`-inf` or at most `MASK_NEG / 2`) receive exactly zero weight; a row
    /// that is entirely masked becomes all zeros.
    pub fn softmax_lastdim(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let d = t.last_dim();
        let mut out = vec![0.0; t.len()];
        let mut masked_rows = 0;
        for (row_in, row_out) in t.data().chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let max = row_in
                .iter()
                .copied()
                .filter(|&x| x > MASK_THRESHOLD)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                masked_rows += 1;
                continue;
            }
            let mut z = 0.0;
            for (o, &x) in row_out.iter_mut().zip(row_in) {
                if x > MASK_THRESHOLD {
                    *o = (x - max).exp();
                    z += *o;
                }
            }
            for o in row_out.iter_mut() {
                *o /= z;
            }
        }
        let out = Tensor::from_parts(t.shape().to_vec(), out);
        self.masked_rows += masked_rows;
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Normalizes each row of `x[..×d]` to zero mean and unit variance (eps
    /// inside the root), then applies `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xt = self.value(x);
        let d = xt.last_dim();
        for p in [gain, bias] {
            let pt = self.value(p);
            if pt.len() != d || pt.shape().len() != 1 {
                return Err(shape_err("layer_norm", xt, pt));
            }
        }
        let gt = self.value(gain).data();
        let bt = self.value(bias).data();
        let rows = xt.outer_len();
        let mut xhat = vec![0.0; xt.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xt.len()];
        for r in 0..rows {
            let row = xt.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = gt[c] * h + bt[c];
            }
        }
        let out = Tensor::from_parts(xt.shape().to_vec(), out);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        ))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let lv = lt.item();
        if !lv.is_finite() {
            let (node, op) = self
                .nodes
                .iter()
                .enumerate()
                .find(|(_, n)| !n.value.is_finite())
                .map(|(i, n)| (i, n.op.name()))
                .unwrap_or((loss.0, self.nodes[loss.0].op.name()));
            return Err(TensorError::NonFinite { value: lv, op, node });
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape().to_vec(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            if i == loss.0 {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn send(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if self.nodes[v.0].requires_grad {
            accumulate(&mut grads[v.0], g);
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let at = self.value(*a);
                let bt = self.value(*b);
                let (m, k) = (at.shape()[0], at.shape()[1]);
                let n = bt.shape()[1];
                if self.requires_grad(*a) {
                    let da = gemm_nt(g.data(), bt.data(), m, n, k);
                    self.send(grads, *a, Tensor::from_parts(vec![m, k], da));
                }
                if self.requires_grad(*b) {
                    let db = gemm_tn(at.data(), g.data(), m, k, n);
                    self.send(grads, *b, Tensor::from_parts(vec![k, n], db));
                }
            }
            Op::MatMulT(a, b) => {
                let at = self.value(*a);
                let bt = self.value(*b);
                let (m, k) = (at.shape()[0], at.shape()[1]);
                let n = bt.shape()[0];
                if self.requires_grad(*a) {
                    let da = gemm_nn(g.data(), bt.data(), m, n, k);
                    self.send(grads, *a, Tensor::from_parts(vec![m, k], da));
                }
                if self.requires_grad(*b) {
                    let db = gemm_tn(g.data(), at.data(), m, n, k);
                    self.send(grads, *b, Tensor::from_parts(vec![n, k], db));
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.clone());
                self.send(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.send(grads, *a, g.clone());
                self.send(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.send(grads, *a, zip_map(g, self.value(*b), |x, y| x * y));
                }
                if self.requires_grad(*b) {
                    self.send(grads, *b, zip_map(g, self.value(*a), |x, y| x * y));
                }
            }
            Op::BroadcastAdd(m, v) => {
                self.send(grads, *m, g.clone());
                if self.requires_grad(*v) {
                    let vt = self.value(*v);
                    let d = vt.len();
                    let mut acc = vec![0.0; d];
                    for row in g.data().chunks_exact(d) {
                        for (s, x) in acc.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    self.send(grads, *v, Tensor::from_parts(vt.shape().to_vec(), acc));
                }
            }
            Op::Scale(a, c) => self.send(grads, *a, g.map(|x| x * c)),
            Op::AddScalar(a) => self.send(grads, *a, g.clone()),
            Op::Sigmoid(a) => self.send(grads, *a, zip_map(g, y, |gi, yi| gi * yi * (1.0 - yi))),
            Op::Relu(a) => {
                let x = self.value(*a);
                self.send(grads, *a, zip_map(g, x, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
            }
            Op::Square(a) => {
                let x = self.value(*a);
                self.send(grads, *a, zip_map(g, x, |gi, xi| 2.0 * xi * gi));
            }
            Op::Ln(a) => {
                let x = self.value(*a);
                self.send(grads, *a, zip_map(g, x, |gi, xi| gi / xi));
            }
            Op::Softplus(a) => {
                let x = self.value(*a);
                self.send(grads, *a, zip_map(g, x, |gi, xi| gi * sigmoid(xi)));
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let (lo, hi) = (*lo, *hi);
                self.send(
                    grads,
                    *a,
                    zip_map(g, x, |gi, xi| if xi >= lo && xi <= hi { gi } else { 0.0 }),
                );
            }
            Op::Sum(a) => {
                let s = g.item();
                let shape = self.shape(*a).to_vec();
                self.send(grads, *a, Tensor::full(shape, s));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let s = g.item() / t.len().max(1) as f64;
                self.send(grads, *a, Tensor::full(t.shape().to_vec(), s));
            }
            Op::Concat(parts) => {
                let total = y.last_dim();
                let rows = y.outer_len();
                let mut offset = 0;
                for &p in parts {
                    let pt = self.value(p);
                    let w = pt.last_dim();
                    if self.requires_grad(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        self.send(grads, p, Tensor::from_parts(pt.shape().to_vec(), d));
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let at = self.value(*a);
                let (r, c) = (at.shape()[0], at.shape()[1]);
                let w = y.shape()[1];
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    d[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                self.send(grads, *a, Tensor::from_parts(vec![r, c], d));
            }
            Op::RepeatRows(a) => {
                let at = self.value(*a);
                let d = at.len();
                let mut acc = vec![0.0; d];
                for row in g.data().chunks_exact(d) {
                    for (s, x) in acc.iter_mut().zip(row) {
                        *s += x;
                    }
                }
                self.send(grads, *a, Tensor::from_parts(at.shape().to_vec(), acc));
            }
            Op::Row(a, i) => {
                let at = self.value(*a);
                let c = at.last_dim();
                let mut d = vec![0.0; at.len()];
                d[i * c..(i + 1) * c].copy_from_slice(g.data());
                self.send(grads, *a, Tensor::from_parts(at.shape().to_vec(), d));
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.send(grads, *a, Tensor::from_parts(shape, g.data().to_vec()));
            }
            Op::Softmax(a) => {
                let d = y.last_dim();
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y
                    .data()
                    .chunks_exact(d)
                    .zip(g.data().chunks_exact(d))
                    .zip(dx.chunks_exact_mut(d))
                {
                    let s = dot(yr, gr);
                    for c in 0..d {
                        dr[c] = yr[c] * (gr[c] - s);
                    }
                }
                self.send(grads, *a, Tensor::from_parts(y.shape().to_vec(), dx));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = y.last_dim();
                let rows = y.outer_len();
                let gain_t = self.value(*gain).data();
                if self.requires_grad(*x) {
                    let mut dx = vec![0.0; y.len()];
                    let mut dxhat = vec![0.0; d];
                    for r in 0..rows {
                        let gr = g.row(r);
                        let hr = &xhat[r * d..(r + 1) * d];
                        for c in 0..d {
                            dxhat[c] = gr[c] * gain_t[c];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2 = dot(&dxhat, hr);
                        let k = rstd[r] / d as f64;
                        for c in 0..d {
                            dx[r * d + c] = k * (d as f64 * dxhat[c] - s1 - hr[c] * s2);
                        }
                    }
                    self.send(grads, *x, Tensor::from_parts(y.shape().to_vec(), dx));
                }
                if self.requires_grad(*gain) {
                    let mut dg = vec![0.0; d];
                    for r in 0..rows {
                        for c in 0..d {
                            dg[c] += g.data()[r * d + c] * xhat[r * d + c];
                        }
                    }
                    self.send(grads, *gain, Tensor::from_parts(vec![d], dg));
                }
                if self.requires_grad(*bias) {
                    let mut db = vec![0.0; d];
                    for row in g.data().chunks_exact(d) {
                        for (s, v) in db.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    self.send(grads, *bias, Tensor::from_parts(vec![d], db));
                }
            }
        }
    }
}
