//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every forward op appends one node to a [`Tape`]. A node remembers the
//! handles of its inputs and whatever the backward rule needs, so
//! [`Tape::backward`] can walk the nodes in exact reverse recording order
//! and push gradients to the inputs. Gradients accumulate (`+=`) across
//! fan-out and across repeated backward calls until [`Tape::zero_grad`].
//!
//! Shapes follow one broadcasting rule only: a bias vector over the batch
//! rows in [`Tape::dense`]. Everything else must match exactly.
//!
//! ```
//! use mtbr_core::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.add(x, x).unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).data(), &[2.0]);
//! ```

mod gradcheck;

pub use gradcheck::{grad_check, GradCheckReport};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Probability clamp used by [`Tape::bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    RowScale {
        x: Var,
        s: Var,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Bce {
        p: Var,
        target: Tensor<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Ordered record of forward operations.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient; zeros when nothing has flowed into `v` yet.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.value.shape()))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).dims2(op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let data = matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `x·W + bias`, with the bias broadcast over rows.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(x, "dense")?;
        let (k2, n) = self.dims2(w, "dense")?;
        if k != k2 {
            return Err(Error::dim("dense", self.value(x).shape(), self.value(w).shape()));
        }
        if self.value(b).len() != n || self.value(b).rank() != 1 {
            return Err(Error::dim("dense bias", self.value(w).shape(), self.value(b).shape()));
        }
        let mut data = matmul_nn(self.value(x).data(), self.value(w).data(), m, k, n);
        let bias = self.value(b).data();
        for row in data.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(out, Op::Dense { x, w, b }, &[x, w, b]))
    }

    /// Multiplies row `i` of `x[b×d]` by `s[i, 0]` where `s` is `[b×1]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "row_scale")?;
        if self.value(s).shape() != [rows, 1] {
            return Err(Error::dim("row_scale", self.value(x).shape(), self.value(s).shape()));
        }
        let sv = self.value(s).data();
        let mut data = self.value(x).data().to_vec();
        for (row, &k) in data.chunks_mut(cols).zip(sv) {
            for v in row {
                *v *= k;
            }
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::RowScale { x, s }, &[x, s]))
    }

    /// Concatenates rank-2 tensors along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let (rows, _) = self.dims2(*first, "concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat")?;
            if r != rows {
                return Err(Error::dim("concat", self.value(*first).shape(), self.value(p).shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Stacks rank-2 tensors with equal column counts along the first axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let (_, cols) = self.dims2(*first, "concat_rows")?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_rows")?;
            if c != cols {
                return Err(Error::dim("concat_rows", self.value(*first).shape(), self.value(p).shape()));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Columns `start..start+len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(Error::dim("slice_cols", self.value(x).shape(), &[start, len]));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&src.row(i)[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose2()?;
        Ok(self.push(out, Op::Transpose(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::scalar(v.sum() / T::of_usize(v.len()));
        self.push(out, Op::Mean(x), &[x])
    }

    /// Column means of `x[r×c]`, giving `[1×c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "mean_rows")?;
        let src = self.value(x);
        let inv = T::one() / T::of_usize(rows);
        let mut data = vec![T::zero(); cols];
        for i in 0..rows {
            for (o, &v) in data.iter_mut().zip(src.row(i)) {
                *o += v;
            }
        }
        for o in &mut data {
            *o *= inv;
        }
        let out = Tensor::new(vec![1, cols], data)?;
        Ok(self.push(out, Op::MeanRows(x), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    /// Row-wise softmax of a rank-2 tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "softmax")?;
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(softmax_row(src.row(i)));
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    /// Per-row standardization (population variance) followed by `gamma ⊙ x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (rows, cols) = self.dims2(x, "layer_norm")?;
        if cols < 2 {
            return Err(Error::Contract("layer_norm needs at least 2 features".into()));
        }
        if eps <= T::zero() {
            return Err(Error::Contract("layer_norm eps must be positive".into()));
        }
        for p in [gamma, beta] {
            if self.value(p).shape() != [cols] {
                return Err(Error::dim("layer_norm affine", self.value(x).shape(), self.value(p).shape()));
            }
        }
        let n = T::of_usize(cols);
        let src = self.value(x);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = src.row(i);
            let mu = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mu) * is;
                xhat.push(h);
                data.push(g[j] * h + b[j]);
            }
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Mean binary cross-entropy over every entry of `p`, with `p` clamped to
    /// `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce_loss(&mut self, p: Var, target: &Tensor<T>) -> Result<Var> {
        let probs = self.value(p);
        probs.check_same(target, "bce_loss")?;
        let loss = bce_value(probs.data(), target.data());
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                target: target.clone(),
            },
            &[p],
        ))
    }

    /// Propagates `∂loss/∂·` to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            for (input, contrib) in self.local_grads(id, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            match &mut self.nodes[id].grad {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `id` to its inputs, given upstream `g`.
    fn local_grads(&self, id: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[id];
        let val = |v: Var| self.value(v);
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(val(*b), "mul", |x, y| x * y)?),
                (*b, g.zip_map(val(*a), "mul", |x, y| x * y)?),
            ],
            Op::Scale(a, k) => {
                let k = *k;
                vec![(*a, g.map(|x| x * k))]
            }
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2("matmul")?;
                let (_, n) = val(*b).dims2("matmul")?;
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(*a) {
                    let da = matmul_nt(g.data(), val(*b).data(), m, n, k);
                    out.push((*a, Tensor::new(vec![m, k], da)?));
                }
                if self.requires_grad(*b) {
                    let db = matmul_tn(val(*a).data(), g.data(), m, k, n);
                    out.push((*b, Tensor::new(vec![k, n], db)?));
                }
                out
            }
            Op::Dense { x, w, b } => {
                let (m, k) = val(*x).dims2("dense")?;
                let (_, n) = val(*w).dims2("dense")?;
                let mut out = Vec::with_capacity(3);
                // input gradients of constant feature batches are never needed
                if self.requires_grad(*x) {
                    let dx = matmul_nt(g.data(), val(*w).data(), m, n, k);
                    out.push((*x, Tensor::new(vec![m, k], dx)?));
                }
                if self.requires_grad(*w) {
                    let dw = matmul_tn(val(*x).data(), g.data(), m, k, n);
                    out.push((*w, Tensor::new(vec![k, n], dw)?));
                }
                let mut db = vec![T::zero(); n];
                for row in g.data().chunks(n) {
                    for (o, &v) in db.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                out.push((*b, Tensor::new(vec![n], db)?));
                out
            }
            Op::RowScale { x, s } => {
                let (rows, cols) = val(*x).dims2("row_scale")?;
                let sv = val(*s).data();
                let xv = val(*x).data();
                let mut dx = g.data().to_vec();
                let mut ds = vec![T::zero(); rows];
                for i in 0..rows {
                    let grow = &g.data()[i * cols..(i + 1) * cols];
                    let xrow = &xv[i * cols..(i + 1) * cols];
                    ds[i] = grow.iter().zip(xrow).map(|(&a, &b)| a * b).sum();
                    for v in &mut dx[i * cols..(i + 1) * cols] {
                        *v *= sv[i];
                    }
                }
                vec![
                    (*x, Tensor::new(vec![rows, cols], dx)?),
                    (*s, Tensor::new(vec![rows, 1], ds)?),
                ]
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = g.dims2("concat")?;
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let (_, c) = val(p).dims2("concat")?;
                    let mut d = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        let start = i * total + offset;
                        d.extend_from_slice(&g.data()[start..start + c]);
                    }
                    out.push((p, Tensor::new(vec![rows, c], d)?));
                    offset += c;
                }
                out
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let n = val(p).len();
                    let d = g.data()[offset..offset + n].to_vec();
                    out.push((p, Tensor::new(val(p).shape().to_vec(), d)?));
                    offset += n;
                }
                out
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = val(*x).dims2("slice_cols")?;
                let (_, len) = g.dims2("slice_cols")?;
                let mut d = vec![T::zero(); rows * cols];
                for i in 0..rows {
                    d[i * cols + start..i * cols + start + len].copy_from_slice(g.row(i));
                }
                vec![(*x, Tensor::new(vec![rows, cols], d)?)]
            }
            Op::Transpose(x) => vec![(*x, g.transpose2()?)],
            Op::Reshape(x) => vec![(*x, g.reshaped(val(*x).shape())?)],
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape(), g.data()[0]))],
            Op::Mean(x) => {
                let n = T::of_usize(val(*x).len());
                vec![(*x, Tensor::full(val(*x).shape(), g.data()[0] / n))]
            }
            Op::MeanRows(x) => {
                let (rows, cols) = val(*x).dims2("mean_rows")?;
                let inv = T::one() / T::of_usize(rows);
                let row: Vec<T> = g.data().iter().map(|&v| v * inv).collect();
                let mut d = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    d.extend_from_slice(&row);
                }
                vec![(*x, Tensor::new(vec![rows, cols], d)?)]
            }
            Op::Relu(x) => vec![(
                *x,
                g.zip_map(val(*x), "relu", |gv, xv| if xv > T::zero() { gv } else { T::zero() })?,
            )],
            Op::Sigmoid(x) => vec![(
                *x,
                g.zip_map(&node.value, "sigmoid", |gv, s| gv * s * (T::one() - s))?,
            )],
            Op::Softmax(x) => {
                let (rows, cols) = node.value.dims2("softmax")?;
                let mut d = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    let s = node.value.row(i);
                    let gr = g.row(i);
                    let dot: T = s.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    d.extend(s.iter().zip(gr).map(|(&si, &gi)| si * (gi - dot)));
                }
                vec![(*x, Tensor::new(vec![rows, cols], d)?)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = val(*x).dims2("layer_norm")?;
                let gm = val(*gamma).data();
                let n = T::of_usize(cols);
                let mut dx = Vec::with_capacity(rows * cols);
                let mut dgamma = vec![T::zero(); cols];
                let mut dbeta = vec![T::zero(); cols];
                for i in 0..rows {
                    let gr = g.row(i);
                    let xh = &xhat[i * cols..(i + 1) * cols];
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for j in 0..cols {
                        let dxh = gr[j] * gm[j];
                        sum_d += dxh;
                        sum_dx += dxh * xh[j];
                        dgamma[j] += gr[j] * xh[j];
                        dbeta[j] += gr[j];
                    }
                    let k = inv_std[i] / n;
                    for j in 0..cols {
                        let dxh = gr[j] * gm[j];
                        dx.push(k * (n * dxh - sum_d - xh[j] * sum_dx));
                    }
                }
                vec![
                    (*x, Tensor::new(vec![rows, cols], dx)?),
                    (*gamma, Tensor::new(vec![cols], dgamma)?),
                    (*beta, Tensor::new(vec![cols], dbeta)?),
                ]
            }
            Op::Bce { p, target } => {
                let probs = val(*p);
                let eps = T::of(BCE_EPS);
                let scale = g.data()[0] / T::of_usize(probs.len());
                let d = probs.zip_map(target, "bce_loss", |pv, y| {
                    if pv < eps || pv > T::one() - eps {
                        T::zero()
                    } else {
                        scale * ((T::one() - y) / (T::one() - pv) - y / pv)
                    }
                })?;
                vec![(*p, d)]
            }
        };
        Ok(out)
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax with row-max subtraction.
pub fn softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean clamped binary cross-entropy, without recording anything.
pub fn bce_value<T: Scalar>(probs: &[T], targets: &[T]) -> T {
    let eps = T::of(BCE_EPS);
    let total: T = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            // comparisons keep a NaN probability NaN
            let p = if p < eps {
                eps
            } else if p > T::one() - eps {
                T::one() - eps
            } else {
                p
            };
            -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
        })
        .sum();
    total / T::of_usize(probs.len())
}
