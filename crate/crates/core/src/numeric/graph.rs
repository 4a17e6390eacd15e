//! Recorded-tape reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape index order is a
//! topological order and the backward pass walks it once in reverse.

use std::collections::HashMap;
use std::sync::Arc;

use super::kernels::{self, PAD};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        let name = name.into();
        if let Some(&i) = self.lookup.get(&name) {
            self.tensors[i] = t;
            return i;
        }
        let i = self.names.len();
        self.lookup.insert(name.clone(), i);
        self.names.push(name);
        self.tensors.push(t);
        i
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id(name).map(move |i| &mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zero tensors mirroring every parameter's shape.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `x[b x d] + row[d]` broadcast over rows.
    AddRow { x: Var, row: Var },
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Gelu(Var),
    Gather { x: Var, index: Arc<[u32]> },
    Reshape(Var),
    ConcatCols(Vec<Var>),
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single forward evaluation recorded for differentiation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
    grads: Vec<Option<Tensor>>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf that is not tied to a parameter store.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for the named parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let id = store
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.leaf(store.tensors()[id].clone());
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let out = kernels::matmul_t(self.value(a), ta, self.value(b), tb)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul { a, b, ta, tb }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, d) = self.value(x).dims2()?;
        if self.value(row).len() != d {
            return Err(Error::Dimension(format!(
                "row broadcast needs {d} values, got {:?}",
                self.value(row).shape()
            )));
        }
        let mut out = self.value(x).clone();
        let r = self.value(row).data();
        for chunk in out.data_mut().chunks_mut(d) {
            for (v, b) in chunk.iter_mut().zip(r) {
                *v += b;
            }
        }
        let ng = self.needs(x) || self.needs(row);
        self.push(out, Op::AddRow { x, row }, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        let ng = self.needs(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = kernels::softmax_rows(self.value(x))?;
        let ng = self.needs(x);
        self.push(out, Op::Softmax(x), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (b, d) = self.value(x).dims2()?;
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::Dimension(format!("layer norm affine params must have length {d}")));
        }
        let (xhat, rstd) = kernels::standardize_rows(self.value(x))?;
        let g = self.value(gain).data();
        let bb = self.value(bias).data();
        let mut out = xhat.clone();
        for row in out.chunks_mut(d) {
            for j in 0..d {
                row[j] = row[j] * g[j] + bb[j];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(Tensor::new(vec![b, d], out)?, Op::LayerNorm { x, gain, bias, xhat, rstd }, ng)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(kernels::gelu);
        let ng = self.needs(x);
        self.push(out, Op::Gelu(x), ng)
    }

    /// `out[i] = x[index[i]]`, or zero where `index[i] == PAD`.
    pub fn gather(&mut self, x: Var, index: Arc<[u32]>, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(Error::Dimension(format!(
                "gather index of length {} cannot fill shape {shape:?}",
                index.len()
            )));
        }
        let src = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i != PAD && i as usize >= src.len()) {
            return Err(Error::Dimension(format!("gather index {bad} beyond {} values", src.len())));
        }
        let out = Tensor::new(shape.to_vec(), kernels::gather(src.data(), &index))?;
        let ng = self.needs(x);
        self.push(out, Op::Gather { x, index }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let ng = self.needs(x);
        self.push(out, Op::Reshape(x), ng)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        self.gather(x, kernels::transpose_index(r, c).into(), &[c, r])
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::Dimension(format!("concat_cols row mismatch: {rows} vs {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::new(vec![rows, total], out)?, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Mean of squared differences, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).expect_same_shape(self.value(b))?;
        let n = self.value(a).len().max(1) as f64;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::scalar(s / n), Op::Mse(a, b), ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Reverse pass from a scalar node. Gradients are retrievable with
    /// [`Graph::grad`] and [`Graph::param_grads`] afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients aligned with `store`'s parameter order; unused parameters get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                self.param_vars
                    .get(&i)
                    .and_then(|&v| self.grad(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let gd = g.dims2()?;
                if self.needs(*a) {
                    let ad = av.dims2()?;
                    let mut ga = vec![0.0; av.len()];
                    if *ta {
                        // a stored k x m: ga = op(b) · gᵀ
                        kernels::gemm(bv.data(), bv.dims2()?, *tb, g.data(), gd, true, &mut ga, false)?;
                    } else {
                        kernels::gemm(g.data(), gd, false, bv.data(), bv.dims2()?, !*tb, &mut ga, false)?;
                    }
                    accumulate(grads, *a, Tensor::new(vec![ad.0, ad.1], ga)?);
                }
                if self.needs(*b) {
                    let bd = bv.dims2()?;
                    let mut gb = vec![0.0; bv.len()];
                    if *tb {
                        // b stored n x k: gb = gᵀ · op(a)
                        kernels::gemm(g.data(), gd, true, av.data(), av.dims2()?, *ta, &mut gb, false)?;
                    } else {
                        kernels::gemm(av.data(), av.dims2()?, !*ta, g.data(), gd, false, &mut gb, false)?;
                    }
                    accumulate(grads, *b, Tensor::new(vec![bd.0, bd.1], gb)?);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y)?);
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y)?);
                }
            }
            Op::AddRow { x, row } => {
                if self.needs(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if self.needs(*row) {
                    let rv = self.value(*row);
                    let d = rv.len();
                    let mut gr = vec![0.0; d];
                    for chunk in g.data().chunks(d) {
                        for (o, v) in gr.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    accumulate(grads, *row, Tensor::new(rv.shape().to_vec(), gr)?);
                }
            }
            Op::Scale(x, s) => {
                if self.needs(*x) {
                    accumulate(grads, *x, g.map(|v| v * s));
                }
            }
            Op::Softmax(x) => {
                if self.needs(*x) {
                    let y = &node.value;
                    let (_, n) = y.dims2()?;
                    let mut gx = vec![0.0; y.len()];
                    for ((gr, yr), outr) in g.data().chunks(n).zip(y.data().chunks(n)).zip(gx.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            outr[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(grads, *x, Tensor::new(y.shape().to_vec(), gx)?);
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (b, d) = node.value.dims2()?;
                let gv = self.value(*gain).data();
                if self.needs(*x) {
                    let mut gx = vec![0.0; b * d];
                    for r in 0..b {
                        let gr = &g.data()[r * d..(r + 1) * d];
                        let xr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dx = 0.0;
                        let mut mean_dx_x = 0.0;
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            mean_dx += dxh;
                            mean_dx_x += dxh * xr[j];
                        }
                        mean_dx /= d as f64;
                        mean_dx_x /= d as f64;
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            gx[r * d + j] = rstd[r] * (dxh - mean_dx - xr[j] * mean_dx_x);
                        }
                    }
                    accumulate(grads, *x, Tensor::new(vec![b, d], gx)?);
                }
                if self.needs(*gain) || self.needs(*bias) {
                    let mut gg = vec![0.0; d];
                    let mut gb = vec![0.0; d];
                    for (gr, xr) in g.data().chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += gr[j] * xr[j];
                            gb[j] += gr[j];
                        }
                    }
                    if self.needs(*gain) {
                        let s = self.value(*gain).shape().to_vec();
                        accumulate(grads, *gain, Tensor::new(s, gg)?);
                    }
                    if self.needs(*bias) {
                        let s = self.value(*bias).shape().to_vec();
                        accumulate(grads, *bias, Tensor::new(s, gb)?);
                    }
                }
            }
            Op::Gelu(x) => {
                if self.needs(*x) {
                    let gx = g.zip_map(self.value(*x), |gv, xv| gv * kernels::gelu_grad(xv))?;
                    accumulate(grads, *x, gx);
                }
            }
            Op::Gather { x, index } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let mut gx = vec![0.0; xv.len()];
                    for (&ix, &gv) in index.iter().zip(g.data()) {
                        if ix != PAD {
                            gx[ix as usize] += gv;
                        }
                    }
                    accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), gx)?);
                }
            }
            Op::Reshape(x) => {
                if self.needs(*x) {
                    let s = self.value(*x).shape().to_vec();
                    accumulate(grads, *x, g.clone().reshape(&s)?);
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2()?;
                let mut off = 0;
                for &p in parts {
                    let (_, w) = self.value(p).dims2()?;
                    if self.needs(p) {
                        let mut gp = vec![0.0; rows * w];
                        for r in 0..rows {
                            gp[r * w..(r + 1) * w]
                                .copy_from_slice(&g.data()[r * total + off..r * total + off + w]);
                        }
                        accumulate(grads, p, Tensor::new(vec![rows, w], gp)?);
                    }
                    off += w;
                }
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = 2.0 * g.data()[0] / av.len().max(1) as f64;
                let diff = av.zip_map(bv, |x, y| (x - y) * scale)?;
                if self.needs(*b) {
                    accumulate(grads, *b, diff.map(|v| -v));
                }
                if self.needs(*a) {
                    accumulate(grads, *a, diff);
                }
            }
            Op::Sum(x) => {
                if self.needs(*x) {
                    let s = self.value(*x).shape().to_vec();
                    accumulate(grads, *x, Tensor::full(&s, g.data()[0]));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow { .. } => "add_row",
        Op::Scale(..) => "scale",
        Op::Softmax(_) => "softmax_rows",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Gelu(_) => "gelu",
        Op::Gather { .. } => "gather",
        Op::Reshape(_) => "reshape",
        Op::ConcatCols(_) => "concat_cols",
        Op::Mse(..) => "mse",
        Op::Sum(_) => "sum",
    }
}

/// Differentiable same-padded convolution of a `c_in x H x W` input.
pub fn conv2d(g: &mut Graph, x: Var, w: Var, stride: usize) -> Result<Var> {
    let (c_in, h, wd, c_out, k) = kernels::validate_conv(g.value(x), g.value(w), stride)?;
    let ho = kernels::conv_out_extent(h, stride);
    let wo = kernels::conv_out_extent(wd, stride);
    let cols = g.gather(x, kernels::im2col_chw(c_in, h, wd, k, stride).into(), &[ho * wo, c_in * k * k])?;
    let wm = g.reshape(w, &[c_out, c_in * k * k])?;
    let y = g.matmul_t(cols, false, wm, true)?;
    g.gather(y, kernels::transpose_index(ho * wo, c_out).into(), &[c_out, ho, wo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::from_fn(&[3, 2], |i| i as f64));
        let l = g.sum(p).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(p).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_square_gradient() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let sq = g.mul(p, p).unwrap();
        let s = g.sum(sq).unwrap();
        let l = g.scale(s, 0.5).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::full(&[2], 3.0));
        let p = g.leaf(Tensor::full(&[2], 1.0));
        let m = g.mul(c, p).unwrap();
        let l = g.sum(m).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(p).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::full(&[1], 2.0));
        let mut g = Graph::new();
        let a = g.param(&store, "w");
        let b = g.param(&store, "w");
        assert_eq!(a, b);
        let m = g.mul(a, b).unwrap();
        let l = g.sum(m).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.param_grads(&store)[0].data(), &[4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::zeros(&[2]));
        assert!(g.backward(p).is_err());
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::full(&[1], f64::MAX));
        assert!(matches!(g.scale(p, 10.0), Err(Error::NonFinite("scale"))));
    }

    #[test]
    fn graph_conv_matches_kernel() {
        let x = Tensor::from_fn(&[2, 5, 4], |i| (i as f64 * 0.37).sin());
        let w = Tensor::from_fn(&[3, 2, 3, 3], |i| (i as f64 * 0.11).cos());
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.leaf(w.clone());
        let y = conv2d(&mut g, xv, wv, 2).unwrap();
        assert_eq!(g.value(y), &kernels::conv2d(&x, &w, 2).unwrap());
    }
}
