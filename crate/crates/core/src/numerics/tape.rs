//! Reverse-mode automatic differentiation.
//!
//! Every operation appends a node to the tape. Nodes are stored in creation
//! order, which is already a topological order, so the backward pass is a
//! single reverse sweep. Only first-order gradients are supported.

use std::borrow::Cow;
use std::cell::{Ref, RefCell};

use super::rng::Rng;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(stride: (usize, usize), padding: (usize, usize), groups: usize) -> Self {
        ConvGeom {
            stride,
            padding,
            groups,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    Tanh(usize),
    Relu(usize),
    Square(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Transpose(usize),
    Reshape(usize),
    Concat(Vec<usize>),
    SliceLast {
        a: usize,
        start: usize,
    },
    SliceFirst {
        a: usize,
        start: usize,
    },
    Sum(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Vec<f64>,
        norm: f64,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    grad: bool,
}

/// Gradients of one output with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, or zeros of length `len` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

/// Computation tape. Parameters are borrowed for the tape's lifetime, so
/// registering them is free.
pub struct Tape<'a> {
    nodes: RefCell<Vec<Node<'a>>>,
    grad_enabled: bool,
    training: bool,
    rng: RefCell<Rng>,
}

impl<'a> Tape<'a> {
    /// Inference tape: no gradients, dropout off.
    pub fn inference() -> Self {
        Self::build(false, false, 0)
    }

    /// Gradient-recording tape with dropout off (used by gradient checks).
    pub fn with_grad() -> Self {
        Self::build(true, false, 0)
    }

    /// Gradient-recording tape with dropout active, seeded.
    pub fn training(seed: u64) -> Self {
        Self::build(true, true, seed)
    }

    fn build(grad_enabled: bool, training: bool, seed: u64) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(256)),
            grad_enabled,
            training,
            rng: RefCell::new(Rng::new(seed)),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Cow<'a, Tensor>, op: Op, grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            grad: grad && self.grad_enabled,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|&v| nodes[v].grad)
    }

    /// Borrowed trainable parameter.
    pub fn param(&self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Owned leaf that participates in differentiation.
    pub fn variable(&self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    pub fn constant(&self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| n[v.0].value.as_ref())
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        self.value(v).clone()
    }

    // ---- linear algebra ----

    /// `op(a) · op(b)` for 2D operands.
    pub fn matmul_t(&self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if av.rank() != 2 || bv.rank() != 2 {
                return Err(Error::dim("matmul", av.shape(), bv.shape()));
            }
            let (m, k) = if ta {
                (av.shape()[1], av.shape()[0])
            } else {
                (av.shape()[0], av.shape()[1])
            };
            let (k2, n) = if tb {
                (bv.shape()[1], bv.shape()[0])
            } else {
                (bv.shape()[0], bv.shape()[1])
            };
            if k != k2 {
                return Err(Error::dim("matmul", av.shape(), bv.shape()));
            }
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, av.data(), ta, bv.data(), tb, &mut c, false);
            Tensor::new(vec![m, n], c)?
        };
        let g = self.needs(&[a.0, b.0]);
        Ok(self.push(
            Cow::Owned(out),
            Op::MatMul {
                a: a.0,
                b: b.0,
                ta,
                tb,
            },
            g,
        ))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `y = x Wᵀ + b` with `x` shaped `[N, din]` or `[din]`, `W` shaped `[dout, din]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
            if wv.rank() != 2 || xv.last_dim() != wv.shape()[1] || xv.rank() > 2 {
                return Err(Error::dim("linear", xv.shape(), wv.shape()));
            }
            let din = wv.shape()[1];
            let dout = wv.shape()[0];
            let n = xv.numel() / din.max(1);
            let mut y = vec![0.0; n * dout];
            if let Some(b) = b {
                let bv = &nodes[b.0].value;
                if bv.numel() != dout {
                    return Err(Error::dim("linear bias", wv.shape(), bv.shape()));
                }
                for row in y.chunks_mut(dout) {
                    row.copy_from_slice(bv.data());
                }
            }
            gemm(n, din, dout, xv.data(), false, wv.data(), true, &mut y, true);
            let shape = if xv.rank() == 1 {
                vec![dout]
            } else {
                vec![n, dout]
            };
            Tensor::new(shape, y)?
        };
        let mut deps = vec![x.0, w.0];
        deps.extend(b.map(|b| b.0));
        let g = self.needs(&deps);
        Ok(self.push(
            Cow::Owned(out),
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
            },
            g,
        ))
    }

    // ---- elementwise ----

    fn binary(&self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let nodes = self.nodes.borrow();
        let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
        if av.numel() != bv.numel() {
            return Err(Error::dim(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let g = self.needs(&[a.0, b.0]);
        Ok(self.push(Cow::Owned(out), Op::Add(a.0, b.0), g))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let g = self.needs(&[a.0, b.0]);
        Ok(self.push(Cow::Owned(out), Op::Sub(a.0, b.0), g))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let g = self.needs(&[a.0, b.0]);
        Ok(self.push(Cow::Owned(out), Op::Mul(a.0, b.0), g))
    }

    fn unary(&self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let g = self.needs(&[a.0]);
        self.push(Cow::Owned(out), op, g)
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a.0, s), |x| x * s)
    }

    pub fn gelu(&self, a: Var) -> Var {
        self.unary(a, Op::Gelu(a.0), gelu)
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| x.max(0.0))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    /// Inverted dropout; identity unless the tape is in training mode.
    pub fn dropout(&self, a: Var, p: f64) -> Result<Var> {
        if !self.training || p <= 0.0 {
            return Ok(a);
        }
        let shape = self.shape(a);
        let keep = 1.0 / (1.0 - p);
        let mask = {
            let mut rng = self.rng.borrow_mut();
            Tensor::from_fn(&shape, |_| if rng.bernoulli(p) { 0.0 } else { keep })
        };
        let m = self.constant(mask);
        self.mul(a, m)
    }

    // ---- normalisation ----

    /// Softmax over the last axis, stabilised by max-subtraction.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let out = {
            let av = self.value(a);
            let n = av.last_dim();
            if n == 0 || av.numel() == 0 {
                return Err(Error::dim("softmax", av.shape(), &[1]));
            }
            let mut data = av.data().to_vec();
            for row in data.chunks_mut(n) {
                softmax_in_place(row);
            }
            Tensor::new(av.shape().to_vec(), data)?
        };
        let g = self.needs(&[a.0]);
        Ok(self.push(Cow::Owned(out), Op::Softmax(a.0), g))
    }

    /// Layer normalisation over the last axis followed by an affine map.
    pub fn layernorm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (out, xhat, rstd) = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            let (gv, bv) = (&nodes[gamma.0].value, &nodes[beta.0].value);
            let d = xv.last_dim();
            if d == 0 || gv.numel() != d || bv.numel() != d {
                return Err(Error::dim("layernorm", xv.shape(), gv.shape()));
            }
            let rows = xv.numel() / d;
            let mut xhat = vec![0.0; xv.numel()];
            let mut rstd = vec![0.0; rows];
            let mut y = vec![0.0; xv.numel()];
            for r in 0..rows {
                let row = &xv.data()[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let rs = 1.0 / (var + eps).sqrt();
                rstd[r] = rs;
                for j in 0..d {
                    let h = (row[j] - mean) * rs;
                    xhat[r * d + j] = h;
                    y[r * d + j] = h * gv.data()[j] + bv.data()[j];
                }
            }
            (Tensor::new(xv.shape().to_vec(), y)?, xhat, rstd)
        };
        let g = self.needs(&[x.0, gamma.0, beta.0]);
        Ok(self.push(
            Cow::Owned(out),
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                rstd,
            },
            g,
        ))
    }

    // ---- convolution ----

    /// Cross-correlation of `x: [Cin, H, W]` with `w: [Cout, Cin/groups, kh, kw]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (out, cols) = {
            let nodes = self.nodes.borrow();
            let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
            let dims = ConvDims::new(xv.shape(), wv.shape(), geom)?;
            let cols = im2col(xv.data(), &dims);
            let mut y = vec![0.0; dims.cout * dims.out_len()];
            if let Some(b) = b {
                let bv = &nodes[b.0].value;
                if bv.numel() != dims.cout {
                    return Err(Error::dim("conv bias", wv.shape(), bv.shape()));
                }
                for (o, row) in y.chunks_mut(dims.out_len()).enumerate() {
                    row.fill(bv.data()[o]);
                }
            }
            let (cog, kg, n) = (dims.cout / geom.groups, dims.k_group(), dims.out_len());
            for g in 0..geom.groups {
                gemm(
                    cog,
                    kg,
                    n,
                    &wv.data()[g * cog * kg..(g + 1) * cog * kg],
                    false,
                    &cols[g * kg * n..(g + 1) * kg * n],
                    false,
                    &mut y[g * cog * n..(g + 1) * cog * n],
                    true,
                );
            }
            (Tensor::new(vec![dims.cout, dims.hout, dims.wout], y)?, cols)
        };
        let mut deps = vec![x.0, w.0];
        deps.extend(b.map(|b| b.0));
        let g = self.needs(&deps);
        let cols = if g { cols } else { Vec::new() };
        Ok(self.push(
            Cow::Owned(out),
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                geom,
                cols,
            },
            g,
        ))
    }

    // ---- shape manipulation ----

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = {
            let av = self.value(a);
            if av.rank() != 2 {
                return Err(Error::dim("transpose", av.shape(), &[2]));
            }
            transpose2(av.data(), av.shape()[0], av.shape()[1])
        };
        let g = self.needs(&[a.0]);
        Ok(self.push(Cow::Owned(out), Op::Transpose(a.0), g))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.to_tensor(a).reshape(shape)?;
        let g = self.needs(&[a.0]);
        Ok(self.push(Cow::Owned(out), Op::Reshape(a.0), g))
    }

    /// Concatenation along the last axis; leading dimensions must agree.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let first = &nodes[parts[0].0].value;
            let lead: Vec<usize> = first.shape()[..first.rank() - 1].to_vec();
            let rows: usize = lead.iter().product();
            let mut widths = Vec::with_capacity(parts.len());
            for p in parts {
                let v = &nodes[p.0].value;
                if v.shape()[..v.rank() - 1] != lead[..] {
                    return Err(Error::dim("concat", first.shape(), v.shape()));
                }
                widths.push(v.last_dim());
            }
            let total: usize = widths.iter().sum();
            let mut data = vec![0.0; rows * total];
            let mut offset = 0;
            for (p, &wd) in parts.iter().zip(&widths) {
                let v = &nodes[p.0].value;
                for r in 0..rows {
                    data[r * total + offset..r * total + offset + wd]
                        .copy_from_slice(&v.data()[r * wd..(r + 1) * wd]);
                }
                offset += wd;
            }
            let mut shape = lead;
            shape.push(total);
            Tensor::new(shape, data)?
        };
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let g = self.needs(&idx);
        Ok(self.push(Cow::Owned(out), Op::Concat(idx), g))
    }

    /// `a[..., start..end]`.
    pub fn slice_last(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let out = {
            let av = self.value(a);
            let d = av.last_dim();
            if start > end || end > d {
                return Err(Error::dim("slice", av.shape(), &[start, end]));
            }
            let rows = av.numel() / d.max(1);
            let w = end - start;
            let mut data = Vec::with_capacity(rows * w);
            for r in 0..rows {
                data.extend_from_slice(&av.data()[r * d + start..r * d + end]);
            }
            let mut shape = av.shape().to_vec();
            *shape.last_mut().unwrap() = w;
            Tensor::new(shape, data)?
        };
        let g = self.needs(&[a.0]);
        Ok(self.push(Cow::Owned(out), Op::SliceLast { a: a.0, start }, g))
    }

    /// `a[start..end, ...]`.
    pub fn slice_first(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let out = {
            let av = self.value(a);
            let n0 = av.shape()[0];
            if start > end || end > n0 {
                return Err(Error::dim("slice", av.shape(), &[start, end]));
            }
            let inner = av.numel() / n0.max(1);
            let mut shape = av.shape().to_vec();
            shape[0] = end - start;
            Tensor::new(shape, av.data()[start * inner..end * inner].to_vec())?
        };
        let g = self.needs(&[a.0]);
        Ok(self.push(Cow::Owned(out), Op::SliceFirst { a: a.0, start }, g))
    }

    // ---- reductions and losses ----

    pub fn sum(&self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let g = self.needs(&[a.0]);
        self.push(Cow::Owned(Tensor::scalar(s)), Op::Sum(a.0), g)
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value(a).numel().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// `Σᵢ wᵢ · CE(logitsᵢ, targetᵢ) / norm` for logits shaped `[N, K]` (or `[K]`).
    pub fn cross_entropy(&self, logits: Var, targets: &[usize], weights: &[f64], norm: f64) -> Result<Var> {
        let loss = {
            let lv = self.value(logits);
            let k = lv.last_dim();
            let n = lv.numel() / k.max(1);
            if targets.len() != n || weights.len() != n || targets.iter().any(|&t| t >= k) {
                return Err(Error::dim("cross_entropy", lv.shape(), &[targets.len()]));
            }
            let mut total = 0.0;
            for (i, row) in lv.data().chunks(k).enumerate() {
                if weights[i] == 0.0 {
                    continue;
                }
                total += weights[i] * (log_sum_exp(row) - row[targets[i]]);
            }
            total / norm
        };
        let g = self.needs(&[logits.0]);
        Ok(self.push(
            Cow::Owned(Tensor::scalar(loss)),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                norm,
            },
            g,
        ))
    }

    // ---- backward ----

    /// Gradients of the scalar `out` with respect to all contributing nodes.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[out.0].value.numel() != 1 {
            return Err(Error::dim("backward", nodes[out.0].value.shape(), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            if !nodes[i].grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            backprop(&nodes, i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }
}

fn acc<'g>(nodes: &[Node<'_>], grads: &'g mut [Option<Vec<f64>>], idx: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[idx].grad {
        return None;
    }
    let len = nodes[idx].value.numel();
    Some(grads[idx].get_or_insert_with(|| vec![0.0; len]))
}

fn backprop(nodes: &[Node<'_>], i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[i].value;
    match &nodes[i].op {
        Op::Leaf => {}
        &Op::MatMul { a, b, ta, tb } => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, n) = (out.shape()[0], out.shape()[1]);
            let k = if ta { av.shape()[0] } else { av.shape()[1] };
            if let Some(ga) = acc(nodes, grads, a) {
                if ta {
                    gemm(k, n, m, bv.data(), tb, g, true, ga, true);
                } else {
                    gemm(m, n, k, g, false, bv.data(), !tb, ga, true);
                }
            }
            if let Some(gb) = acc(nodes, grads, b) {
                if tb {
                    gemm(n, m, k, g, true, av.data(), ta, gb, true);
                } else {
                    gemm(k, m, n, av.data(), !ta, g, false, gb, true);
                }
            }
        }
        &Op::Linear { x, w, b } => {
            let (xv, wv) = (&nodes[x].value, &nodes[w].value);
            let (dout, din) = (wv.shape()[0], wv.shape()[1]);
            let n = xv.numel() / din.max(1);
            if let Some(gx) = acc(nodes, grads, x) {
                gemm(n, dout, din, g, false, wv.data(), false, gx, true);
            }
            if let Some(gw) = acc(nodes, grads, w) {
                gemm(dout, n, din, g, true, xv.data(), false, gw, true);
            }
            if let Some(b) = b {
                if let Some(gb) = acc(nodes, grads, b) {
                    for row in g.chunks(dout) {
                        for (d, v) in gb.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
        }
        &Op::Add(a, b) => {
            for idx in [a, b] {
                if let Some(ga) = acc(nodes, grads, idx) {
                    ga.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
            }
        }
        &Op::Sub(a, b) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(d, v)| *d += v);
            }
            if let Some(gb) = acc(nodes, grads, b) {
                gb.iter_mut().zip(g).for_each(|(d, v)| *d -= v);
            }
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            if let Some(ga) = acc(nodes, grads, a) {
                for ((d, v), y) in ga.iter_mut().zip(g).zip(bv) {
                    *d += v * y;
                }
            }
            if let Some(gb) = acc(nodes, grads, b) {
                for ((d, v), x) in gb.iter_mut().zip(g).zip(av) {
                    *d += v * x;
                }
            }
        }
        &Op::Scale(a, s) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(d, v)| *d += v * s);
            }
        }
        &Op::Gelu(a) => unary_back(nodes, grads, a, g, gelu_grad),
        &Op::Tanh(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                for ((d, v), y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *d += v * (1.0 - y * y);
                }
            }
        }
        &Op::Relu(a) => unary_back(nodes, grads, a, g, |x| if x > 0.0 { 1.0 } else { 0.0 }),
        &Op::Square(a) => unary_back(nodes, grads, a, g, |x| 2.0 * x),
        &Op::Softmax(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                let n = out.last_dim();
                for ((gr, yr), dr) in g.chunks(n).zip(out.data().chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        } => {
            let d = out.last_dim();
            let gam = nodes[*gamma].value.data();
            if let Some(gg) = acc(nodes, grads, *gamma) {
                for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for j in 0..d {
                        gg[j] += gr[j] * hr[j];
                    }
                }
            }
            if let Some(gb) = acc(nodes, grads, *beta) {
                for gr in g.chunks(d) {
                    for j in 0..d {
                        gb[j] += gr[j];
                    }
                }
            }
            if let Some(gx) = acc(nodes, grads, *x) {
                for (r, ((gr, hr), dr)) in g.chunks(d).zip(xhat.chunks(d)).zip(gx.chunks_mut(d)).enumerate() {
                    let dh: Vec<f64> = (0..d).map(|j| gr[j] * gam[j]).collect();
                    let mean_dh = dh.iter().sum::<f64>() / d as f64;
                    let mean_dhh = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dr[j] += rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dhh);
                    }
                }
            }
        }
        Op::Conv2d { x, w, b, geom, cols } => {
            let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
            let dims = ConvDims::new(xv.shape(), wv.shape(), *geom).expect("validated in forward");
            let (cog, kg, n) = (dims.cout / geom.groups, dims.k_group(), dims.out_len());
            if let Some(b) = b {
                if let Some(gb) = acc(nodes, grads, *b) {
                    for (o, row) in g.chunks(n).enumerate() {
                        gb[o] += row.iter().sum::<f64>();
                    }
                }
            }
            if let Some(gw) = acc(nodes, grads, *w) {
                for grp in 0..geom.groups {
                    gemm(
                        cog,
                        n,
                        kg,
                        &g[grp * cog * n..(grp + 1) * cog * n],
                        false,
                        &cols[grp * kg * n..(grp + 1) * kg * n],
                        true,
                        &mut gw[grp * cog * kg..(grp + 1) * cog * kg],
                        true,
                    );
                }
            }
            if let Some(gx) = acc(nodes, grads, *x) {
                let mut dcols = vec![0.0; cols.len()];
                for grp in 0..geom.groups {
                    gemm(
                        kg,
                        cog,
                        n,
                        &wv.data()[grp * cog * kg..(grp + 1) * cog * kg],
                        true,
                        &g[grp * cog * n..(grp + 1) * cog * n],
                        false,
                        &mut dcols[grp * kg * n..(grp + 1) * kg * n],
                        false,
                    );
                }
                col2im(&dcols, &dims, gx);
            }
        }
        &Op::Transpose(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] += g[i * c + j];
                    }
                }
            }
        }
        &Op::Reshape(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(d, v)| *d += v);
            }
        }
        Op::Concat(parts) => {
            let total = out.last_dim();
            let rows = out.numel() / total.max(1);
            let mut offset = 0;
            for &p in parts {
                let wd = nodes[p].value.last_dim();
                if let Some(gp) = acc(nodes, grads, p) {
                    for r in 0..rows {
                        for j in 0..wd {
                            gp[r * wd + j] += g[r * total + offset + j];
                        }
                    }
                }
                offset += wd;
            }
        }
        &Op::SliceLast { a, start } => {
            let d = nodes[a].value.last_dim();
            let w = out.last_dim();
            if let Some(ga) = acc(nodes, grads, a) {
                let rows = g.len() / w.max(1);
                for r in 0..rows {
                    for j in 0..w {
                        ga[r * d + start + j] += g[r * w + j];
                    }
                }
            }
        }
        &Op::SliceFirst { a, start } => {
            let inner = out.numel() / out.shape()[0].max(1);
            if let Some(ga) = acc(nodes, grads, a) {
                for (d, v) in ga[start * inner..].iter_mut().zip(g) {
                    *d += v;
                }
            }
        }
        &Op::Sum(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            weights,
            norm,
        } => {
            let lv = &nodes[*logits].value;
            let k = lv.last_dim();
            if let Some(gl) = acc(nodes, grads, *logits) {
                for (i, (row, drow)) in lv.data().chunks(k).zip(gl.chunks_mut(k)).enumerate() {
                    if weights[i] == 0.0 {
                        continue;
                    }
                    let scale = g[0] * weights[i] / norm;
                    let lse = log_sum_exp(row);
                    for j in 0..k {
                        let p = (row[j] - lse).exp();
                        let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                        drow[j] += scale * (p - onehot);
                    }
                }
            }
        }
    }
}

fn unary_back(nodes: &[Node<'_>], grads: &mut [Option<Vec<f64>>], a: usize, g: &[f64], df: impl Fn(f64) -> f64) {
    if !nodes[a].grad {
        return;
    }
    let xv = nodes[a].value.data().to_vec();
    if let Some(ga) = acc(nodes, grads, a) {
        for ((d, v), x) in ga.iter_mut().zip(g).zip(&xv) {
            *d += v * df(*x);
        }
    }
}

// ---- scalar helpers ----

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn transpose2(data: &[f64], r: usize, c: usize) -> Tensor {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = data[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).expect("sizes agree")
}

// ---- im2col ----

struct ConvDims {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    hout: usize,
    wout: usize,
    geom: ConvGeom,
}

impl ConvDims {
    fn new(x: &[usize], w: &[usize], geom: ConvGeom) -> Result<Self> {
        if x.len() != 3 || w.len() != 4 {
            return Err(Error::dim("conv", x, w));
        }
        let (cin, h, wd) = (x[0], x[1], x[2]);
        let (cout, cpg, kh, kw) = (w[0], w[1], w[2], w[3]);
        let groups = geom.groups;
        if groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cpg {
            return Err(Error::Config(format!(
                "conv: {cin} input / {cout} output channels incompatible with {groups} groups and kernel {w:?}"
            )));
        }
        let (sh, sw) = geom.stride;
        let (ph, pw) = geom.padding;
        if sh == 0 || sw == 0 || h + 2 * ph < kh || wd + 2 * pw < kw {
            return Err(Error::Config(format!(
                "conv: non-positive output for input {x:?}, kernel {w:?}, stride {:?}, padding {:?}",
                geom.stride, geom.padding
            )));
        }
        Ok(ConvDims {
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            hout: (h + 2 * ph - kh) / sh + 1,
            wout: (wd + 2 * pw - kw) / sw + 1,
            geom,
        })
    }

    fn out_len(&self) -> usize {
        self.hout * self.wout
    }

    fn k_group(&self) -> usize {
        self.cin / self.geom.groups * self.kh * self.kw
    }
}

/// Column matrix laid out as `[cin·kh·kw, hout·wout]`; because channels are
/// the slowest axis, group `g` owns a contiguous row block.
fn im2col(x: &[f64], d: &ConvDims) -> Vec<f64> {
    let n = d.out_len();
    let mut cols = vec![0.0; d.cin * d.kh * d.kw * n];
    let (sh, sw) = d.geom.stride;
    let (ph, pw) = d.geom.padding;
    for c in 0..d.cin {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((c * d.kh + ki) * d.kw + kj) * n;
                for oy in 0..d.hout {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = c * d.h * d.w + iy as usize * d.w;
                    let dst = row + oy * d.wout;
                    for ox in 0..d.wout {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < d.w as isize {
                            cols[dst + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], d: &ConvDims, dx: &mut [f64]) {
    let n = d.out_len();
    let (sh, sw) = d.geom.stride;
    let (ph, pw) = d.geom.padding;
    for c in 0..d.cin {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = ((c * d.kh + ki) * d.kw + kj) * n;
                for oy in 0..d.hout {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = c * d.h * d.w + iy as usize * d.w;
                    let src = row + oy * d.wout;
                    for ox in 0..d.wout {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < d.w as isize {
                            dx[dst + ix as usize] += cols[src + ox];
                        }
                    }
                }
            }
        }
    }
}
