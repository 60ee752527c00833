//! Parameterised building blocks over the tape.

use super::params::{Bound, ParamId, ParamStore};
use super::rng::Rng;
use super::tape::{ConvGeom, Tape, Var};
use crate::error::{Error, Result};

/// Layer-norm epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    /// Normal init scaled by `gain / sqrt(din)`, zero bias.
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, bias: bool, gain: f64, rng: &mut Rng) -> Self {
        let std = gain / (din.max(1) as f64).sqrt();
        let w = store.add_normal(format!("{name}.w"), &[dout, din], std, rng);
        let b = bias.then(|| store.add_zeros(format!("{name}.b"), &[dout]));
        Linear { w, b }
    }

    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        tape.linear(x, p[self.w], self.b.map(|b| p[b]))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: store.add_ones(format!("{name}.gamma"), &[d]),
            beta: store.add_zeros(format!("{name}.beta"), &[d]),
        }
    }

    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        tape.layernorm(x, p[self.gamma], p[self.beta], LN_EPS)
    }
}

/// 2D convolution over `[C, H, W]` inputs. 1D sequences use `H = 1`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub geom: ConvGeom,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        geom: ConvGeom,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = cin / geom.groups * kernel.0 * kernel.1;
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let w = store.add_normal(format!("{name}.w"), &[cout, cin / geom.groups, kernel.0, kernel.1], std, rng);
        let b = bias.then(|| store.add_zeros(format!("{name}.b"), &[cout]));
        Conv { w, b, geom }
    }

    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        tape.conv2d(x, p[self.w], self.b.map(|b| p[b]), self.geom)
    }

    /// Applies the convolution to a `[C, L]` sequence.
    pub fn forward_seq(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        let s = tape.shape(x);
        let x3 = tape.reshape(x, &[s[0], 1, s[1]])?;
        let y = self.forward(tape, p, x3)?;
        let ys = tape.shape(y);
        tape.reshape(y, &[ys[0], ys[2]])
    }
}

/// Multi-head scaled dot-product self-attention over a `[L, d]` sequence.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("attention width {d} not divisible by {heads} heads")));
        }
        Ok(SelfAttention {
            q: Linear::new(store, &format!("{name}.q"), d, d, true, 1.0, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, true, 1.0, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, true, 1.0, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, true, 1.0, rng),
            heads,
        })
    }

    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        let q = self.q.forward(tape, p, x)?;
        let k = self.k.forward(tape, p, x)?;
        let v = self.v.forward(tape, p, x)?;
        let heads = multi_head_attention(tape, q, k, v, self.heads)?;
        self.o.forward(tape, p, heads)
    }
}

/// Core attention on already-projected `q, k, v: [L, d]`, returning the
/// concatenated head outputs `[L, d]`.
pub fn multi_head_attention(tape: &Tape<'_>, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let d = tape.value(q).last_dim();
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("attention width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (tape.slice_last(q, lo, hi)?, tape.slice_last(k, lo, hi)?, tape.slice_last(v, lo, hi)?)
        };
        let scores = tape.matmul_t(qh, kh, false, true)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores)?;
        outs.push(tape.matmul(attn, vh)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        tape.concat(&outs)
    }
}
