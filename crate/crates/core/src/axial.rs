//! Axial sequences, the per-axis sequence encoders, count/header prediction
//! and interval-to-boundary decoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::argmax;
use crate::numerics::{
    Bound, Conv, ConvGeom, LayerNorm, Linear, ParamId, ParamStore, Rng, SelfAttention, Tape, Tensor, Var,
};

/// Row/column counts, header rows and normalised boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub header_rows: usize,
    pub row_bounds: Vec<f64>,
    pub col_bounds: Vec<f64>,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, header_rows: usize, row_bounds: Vec<f64>, col_bounds: Vec<f64>) -> Result<Self> {
        let g = GridSpec {
            rows,
            cols,
            header_rows,
            row_bounds,
            col_bounds,
        };
        g.validate()?;
        Ok(g)
    }

    /// Evenly spaced boundaries.
    pub fn uniform(rows: usize, cols: usize, header_rows: usize) -> Self {
        let even = |n: usize| (0..=n).map(|i| i as f64 / n as f64).collect();
        GridSpec {
            rows,
            cols,
            header_rows,
            row_bounds: even(rows),
            col_bounds: even(cols),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Consistency("grid needs at least one row and column".into()));
        }
        if self.header_rows > self.rows {
            return Err(Error::Consistency(format!("{} header rows exceed {} rows", self.header_rows, self.rows)));
        }
        for (name, b, n) in [("row", &self.row_bounds, self.rows), ("column", &self.col_bounds, self.cols)] {
            if b.len() != n + 1 {
                return Err(Error::Consistency(format!("{name} boundaries: expected {}, got {}", n + 1, b.len())));
            }
            if b[0] != 0.0 || b[n] != 1.0 {
                return Err(Error::Consistency(format!("{name} boundaries must run from 0 to 1")));
            }
            if b.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::Consistency(format!("{name} boundaries not non-decreasing")));
            }
        }
        Ok(())
    }
}

/// Which spatial axis a sequence runs along.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// One token per feature row (mean over width).
    Rows,
    /// One token per feature column (mean over height).
    Cols,
}

impl Axis {
    fn tag(self) -> &'static str {
        match self {
            Axis::Rows => "rows",
            Axis::Cols => "cols",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadVariant {
    Mlp,
    Conv1d,
    #[default]
    Transformer,
    Twod,
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(HeadVariant::Mlp),
            "conv1d" => Ok(HeadVariant::Conv1d),
            "transformer" => Ok(HeadVariant::Transformer),
            "twod" => Ok(HeadVariant::Twod),
            other => Err(Error::Config(format!("unknown head variant {other:?}"))),
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadVariant::Mlp => "mlp",
            HeadVariant::Conv1d => "conv1d",
            HeadVariant::Transformer => "transformer",
            HeadVariant::Twod => "twod",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxialConfig {
    pub d_seq: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub head_variant: HeadVariant,
    /// Hidden width of the `mlp` variant.
    pub mlp_hidden: usize,
    /// Length of the learned positional table.
    pub max_len: usize,
}

impl Default for AxialConfig {
    fn default() -> Self {
        AxialConfig {
            d_seq: 32,
            layers: 2,
            heads: 4,
            d_ff: 64,
            dropout: 0.1,
            head_variant: HeadVariant::Transformer,
            mlp_hidden: 64,
            max_len: 64,
        }
    }
}

impl AxialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_seq == 0 || self.heads == 0 || self.d_seq % self.heads != 0 {
            return Err(Error::Config(format!("d_seq {} not divisible by {} heads", self.d_seq, self.heads)));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Averaging matrix `[n_out, h·w]` taking a flattened `[h, w]` plane to its
/// row means (`Axis::Rows`) or column means (`Axis::Cols`).
fn axis_mean_matrix(h: usize, w: usize, axis: Axis) -> Tensor {
    match axis {
        Axis::Rows => Tensor::from_fn(&[h, h * w], |i| {
            let (r, k) = (i / (h * w), i % (h * w));
            if k / w == r {
                1.0 / w as f64
            } else {
                0.0
            }
        }),
        Axis::Cols => Tensor::from_fn(&[w, h * w], |i| {
            let (c, k) = (i / (h * w), i % (h * w));
            if k % w == c {
                1.0 / h as f64
            } else {
                0.0
            }
        }),
    }
}

/// Axial sequence of `features: [d, h, w]` as tokens `[L, d]`.
pub fn axial_tokens(tape: &Tape<'_>, features: Var, axis: Axis) -> Result<Var> {
    let s = tape.shape(features);
    let (d, h, w) = (s[0], s[1], s[2]);
    let flat = tape.reshape(features, &[d, h * w])?;
    let m = tape.constant(axis_mean_matrix(h, w, axis));
    tape.matmul_t(m, flat, false, true)
}

/// Row-mean and column-mean sequences `(S_r: [d, h], S_c: [d, w])`.
pub fn axial_sequences(features: &Tensor) -> (Tensor, Tensor) {
    let (d, h, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let x = features.data();
    let mut sr = Tensor::zeros(&[d, h]);
    let mut sc = Tensor::zeros(&[d, w]);
    for c in 0..d {
        for i in 0..h {
            for j in 0..w {
                let v = x[(c * h + i) * w + j];
                sr.data_mut()[c * h + i] += v / w as f64;
                sc.data_mut()[c * w + j] += v / h as f64;
            }
        }
    }
    (sr, sc)
}

/// Adaptive average pooling matrix `[out, len]` with the usual window rule
/// `[⌊i·len/out⌋, ⌈(i+1)·len/out⌉)`.
pub fn adaptive_pool_matrix(len: usize, out: usize) -> Tensor {
    let mut m = Tensor::zeros(&[out, len]);
    for i in 0..out {
        let lo = i * len / out;
        let hi = ((i + 1) * len).div_ceil(out);
        let n = (hi - lo) as f64;
        for j in lo..hi {
            m.data_mut()[i * len + j] = 1.0 / n;
        }
    }
    m
}

/// Linear interpolation matrix `[out, len]` with aligned endpoints.
pub fn stretch_matrix(len: usize, out: usize) -> Tensor {
    let mut m = Tensor::zeros(&[out, len]);
    for i in 0..out {
        let pos = if out == 1 { 0.0 } else { i as f64 * (len - 1) as f64 / (out - 1) as f64 };
        let lo = (pos.floor() as usize).min(len - 1);
        let hi = (lo + 1).min(len - 1);
        let frac = pos - lo as f64;
        m.data_mut()[i * len + lo] += 1.0 - frac;
        m.data_mut()[i * len + hi] += frac;
    }
    m
}

/// Sampling matrix `[n_t, len]` reading a sequence of cell-centred values at
/// normalised positions `t ∈ [0, 1]` (half-pixel alignment, clamped ends).
pub fn sample_matrix(len: usize, ts: &[f64]) -> Tensor {
    let mut m = Tensor::zeros(&[ts.len(), len]);
    for (i, &t) in ts.iter().enumerate() {
        let pos = (t * len as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        let frac = pos - lo as f64;
        m.data_mut()[i * len + lo] += 1.0 - frac;
        m.data_mut()[i * len + hi] += frac;
    }
    m
}

fn mean_tokens(tape: &Tape<'_>, x: Var) -> Result<Var> {
    let l = tape.shape(x)[0];
    let avg = tape.constant(Tensor::full(&[1, l], 1.0 / l as f64));
    let m = tape.matmul(avg, x)?;
    let d = tape.shape(m)[1];
    tape.reshape(m, &[d])
}

/// Runs a conv over token-major `[L, d]` input, returning `[L, d_out]`.
fn conv_tokens(tape: &Tape<'_>, p: &Bound, conv: &Conv, x: Var) -> Result<Var> {
    let xt = tape.transpose(x)?;
    let y = conv.forward_seq(tape, p, xt)?;
    tape.transpose(y)
}

fn seq_conv(store: &mut ParamStore, name: &str, cin: usize, cout: usize, depthwise: bool, rng: &mut Rng) -> Conv {
    let groups = if depthwise { cin } else { 1 };
    Conv::new(store, name, cin, cout, (1, 3), ConvGeom::new((1, 1), (0, 1), groups), true, rng)
}

#[derive(Clone, Debug)]
struct TransformerLayer {
    ln1: LayerNorm,
    attn: SelfAttention,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Clone, Debug)]
enum Body {
    Transformer {
        layers: Vec<TransformerLayer>,
        depthwise: Conv,
        pointwise: Linear,
    },
    Mlp {
        fc1: Linear,
        fc2: Linear,
    },
    Conv1d {
        blocks: Vec<Conv>,
    },
    Twod {
        blocks: Vec<(Conv, Conv)>,
    },
}

/// Sequence encoder for one axis.
#[derive(Clone, Debug)]
pub struct AxialEncoder {
    axis: Axis,
    proj: Option<Linear>,
    pos: Option<ParamId>,
    body: Body,
    out_ln: LayerNorm,
    dropout: f64,
}

impl AxialEncoder {
    pub fn new(store: &mut ParamStore, axis: Axis, d_model: usize, cfg: &AxialConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let pre = format!("axial.{}", axis.tag());
        let d = cfg.d_seq;
        let gain = 2f64.sqrt();
        let seq_front = |store: &mut ParamStore, rng: &mut Rng| {
            let proj = Linear::new(store, &format!("{pre}.proj"), d_model, d, true, 1.0, rng);
            let pos = store.add_normal(format!("{pre}.pos"), &[cfg.max_len, d], 0.02, rng);
            (Some(proj), Some(pos))
        };
        let (proj, pos, body) = match cfg.head_variant {
            HeadVariant::Transformer => {
                let (proj, pos) = seq_front(store, rng);
                let mut layers = Vec::with_capacity(cfg.layers);
                for l in 0..cfg.layers {
                    let n = format!("{pre}.layer{l}");
                    layers.push(TransformerLayer {
                        ln1: LayerNorm::new(store, &format!("{n}.ln1"), d),
                        attn: SelfAttention::new(store, &format!("{n}.attn"), d, cfg.heads, rng)?,
                        ln2: LayerNorm::new(store, &format!("{n}.ln2"), d),
                        ff1: Linear::new(store, &format!("{n}.ff1"), d, cfg.d_ff, true, gain, rng),
                        ff2: Linear::new(store, &format!("{n}.ff2"), cfg.d_ff, d, true, 1.0, rng),
                    });
                }
                let depthwise = seq_conv(store, &format!("{pre}.dw"), d, d, true, rng);
                let pointwise = Linear::new(store, &format!("{pre}.pw"), d, d, true, gain, rng);
                (proj, pos, Body::Transformer { layers, depthwise, pointwise })
            }
            HeadVariant::Mlp => {
                let (proj, pos) = seq_front(store, rng);
                let fc1 = Linear::new(store, &format!("{pre}.fc1"), d, cfg.mlp_hidden, true, gain, rng);
                let fc2 = Linear::new(store, &format!("{pre}.fc2"), cfg.mlp_hidden, d, true, 1.0, rng);
                (proj, pos, Body::Mlp { fc1, fc2 })
            }
            HeadVariant::Conv1d => {
                let (proj, pos) = seq_front(store, rng);
                let blocks = (0..cfg.layers)
                    .map(|l| seq_conv(store, &format!("{pre}.conv{l}"), d, d, false, rng))
                    .collect();
                (proj, pos, Body::Conv1d { blocks })
            }
            HeadVariant::Twod => {
                let mut blocks = Vec::with_capacity(3);
                for b in 0..3 {
                    let cout = if b == 2 { d } else { d_model };
                    let dw = Conv::new(
                        store,
                        &format!("{pre}.block{b}.dw"),
                        d_model,
                        d_model,
                        (3, 3),
                        ConvGeom::new((1, 1), (1, 1), d_model),
                        true,
                        rng,
                    );
                    let pw = Conv::new(
                        store,
                        &format!("{pre}.block{b}.pw"),
                        d_model,
                        cout,
                        (1, 1),
                        ConvGeom::new((1, 1), (0, 0), 1),
                        true,
                        rng,
                    );
                    blocks.push((dw, pw));
                }
                (None, None, Body::Twod { blocks })
            }
        };
        let out_ln = LayerNorm::new(store, &format!("{pre}.out_ln"), d);
        Ok(AxialEncoder {
            axis,
            proj,
            pos,
            body,
            out_ln,
            dropout: cfg.dropout,
        })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// Encodes the feature map `[d_model, h, w]` into tokens `[L, d_seq]`.
    pub fn encode(&self, tape: &Tape<'_>, p: &Bound, features: Var) -> Result<Var> {
        if let Body::Twod { blocks } = &self.body {
            let mut x = features;
            for (i, (dw, pw)) in blocks.iter().enumerate() {
                let y = tape.gelu(pw.forward(tape, p, dw.forward(tape, p, x)?)?);
                x = if i + 1 < blocks.len() { tape.add(x, y)? } else { y };
            }
            let t = axial_tokens(tape, x, self.axis)?;
            return self.out_ln.forward(tape, p, t);
        }
        let s = axial_tokens(tape, features, self.axis)?;
        self.encode_sequence(tape, p, s)
    }

    /// Encodes an axial sequence given as tokens `[L, d_model]`; the output
    /// is layer-normalised per token.
    pub fn encode_sequence(&self, tape: &Tape<'_>, p: &Bound, s: Var) -> Result<Var> {
        let x = self.body_forward(tape, p, s)?;
        self.out_ln.forward(tape, p, x)
    }

    fn body_forward(&self, tape: &Tape<'_>, p: &Bound, s: Var) -> Result<Var> {
        let (Some(proj), Some(pos)) = (&self.proj, self.pos) else {
            return Err(Error::Config("the twod head works on feature maps, not sequences".into()));
        };
        let len = tape.shape(s)[0];
        let mut x = proj.forward(tape, p, s)?;
        let table_len = tape.shape(p[pos])[0];
        let pick = if len <= table_len {
            Tensor::from_fn(&[len, table_len], |i| if i / table_len == i % table_len { 1.0 } else { 0.0 })
        } else {
            stretch_matrix(table_len, len)
        };
        let pe = tape.matmul(tape.constant(pick), p[pos])?;
        x = tape.add(x, pe)?;
        match &self.body {
            Body::Transformer {
                layers,
                depthwise,
                pointwise,
            } => {
                for layer in layers {
                    let a = layer.attn.forward(tape, p, layer.ln1.forward(tape, p, x)?)?;
                    x = tape.add(x, tape.dropout(a, self.dropout)?)?;
                    let h = tape.gelu(layer.ff1.forward(tape, p, layer.ln2.forward(tape, p, x)?)?);
                    let h = layer.ff2.forward(tape, p, tape.dropout(h, self.dropout)?)?;
                    x = tape.add(x, tape.dropout(h, self.dropout)?)?;
                }
                let t = conv_tokens(tape, p, depthwise, x)?;
                let t = tape.gelu(pointwise.forward(tape, p, t)?);
                tape.add(x, t)
            }
            Body::Mlp { fc1, fc2 } => {
                let h = tape.gelu(fc1.forward(tape, p, x)?);
                let h = fc2.forward(tape, p, tape.dropout(h, self.dropout)?)?;
                tape.add(x, h)
            }
            Body::Conv1d { blocks } => {
                for conv in blocks {
                    let h = tape.gelu(conv_tokens(tape, p, conv, x)?);
                    x = tape.add(x, tape.dropout(h, self.dropout)?)?;
                }
                Ok(x)
            }
            Body::Twod { .. } => unreachable!("handled above"),
        }
    }
}

/// Count and header classifiers fed by `[z, mean(S_r), mean(S_c)]`.
#[derive(Clone, Debug)]
pub struct CountHead {
    pub rows: Linear,
    pub cols: Linear,
    pub header: Linear,
}

impl CountHead {
    pub fn new(store: &mut ParamStore, d_z: usize, d_seq: usize, r_max: usize, c_max: usize, rng: &mut Rng) -> Self {
        let din = d_z + 2 * d_seq;
        CountHead {
            rows: Linear::new(store, "counts.rows", din, r_max, true, 1.0, rng),
            cols: Linear::new(store, "counts.cols", din, c_max, true, 1.0, rng),
            header: Linear::new(store, "counts.header", din, r_max + 1, true, 1.0, rng),
        }
    }

    /// `(logits_R, logits_C, logits_H)` from the latent and the encoded
    /// row/column tokens.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, z: Var, rows_enc: Var, cols_enc: Var) -> Result<(Var, Var, Var)> {
        let sr = mean_tokens(tape, rows_enc)?;
        let sc = mean_tokens(tape, cols_enc)?;
        let x = tape.concat(&[z, sr, sc])?;
        Ok((
            self.rows.forward(tape, p, x)?,
            self.cols.forward(tape, p, x)?,
            self.header.forward(tape, p, x)?,
        ))
    }
}

/// Decoded counts `(R, C, H_hdr)`: index `k` means count `k + 1`, header
/// index means the header count itself, clamped to `R`.
pub fn decode_counts(logits_r: &[f64], logits_c: &[f64], logits_h: &[f64]) -> (usize, usize, usize) {
    let r = argmax(logits_r) + 1;
    let c = argmax(logits_c) + 1;
    let h = argmax(logits_h).min(r);
    (r, c, h)
}

/// Adaptive pool to `max_count + 1` slots, flatten, one linear map to
/// `max_count + 1` interval logits.
#[derive(Clone, Debug)]
pub struct IntervalHead {
    pub proj: Linear,
    pub slots: usize,
}

impl IntervalHead {
    pub fn new(store: &mut ParamStore, name: &str, d_seq: usize, max_count: usize, rng: &mut Rng) -> Self {
        let slots = max_count + 1;
        IntervalHead {
            proj: Linear::new(store, name, d_seq * slots, slots, true, 0.1, rng),
            slots,
        }
    }

    /// `encoded: [L, d_seq]` → logits `[max_count + 1]`.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, encoded: Var) -> Result<Var> {
        let s = tape.shape(encoded);
        let pool = tape.constant(adaptive_pool_matrix(s[0], self.slots));
        let pooled = tape.matmul(pool, encoded)?;
        let flat = tape.reshape(pooled, &[self.slots * s[1]])?;
        self.proj.forward(tape, p, flat)
    }
}

/// Softmax over the first `count` logits, cumulative sum with a leading 0,
/// renormalised so the last boundary is exactly 1.
pub fn decode_boundaries(logits: &[f64], count: usize) -> Result<Vec<f64>> {
    if count == 0 || count > logits.len() {
        return Err(Error::Config(format!("count {count} outside 1..={}", logits.len())));
    }
    let mut p = logits[..count].to_vec();
    crate::numerics::softmax_in_place(&mut p);
    let mut out = Vec::with_capacity(count + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for v in &p {
        acc += v;
        out.push(acc);
    }
    let total = acc;
    for v in out.iter_mut() {
        *v /= total;
    }
    out[count] = 1.0;
    Ok(out)
}

/// Differentiable interior boundaries `y_1..y_{count-1}` from interval
/// logits: softmax of the first `count`, then a cumulative sum.
pub fn interior_boundaries(tape: &Tape<'_>, logits: Var, count: usize) -> Result<Option<Var>> {
    if count < 2 {
        return Ok(None);
    }
    let kept = tape.slice_last(logits, 0, count)?;
    let p = tape.softmax(kept)?;
    // cumsum[j] = Σ_{i ≤ j} p_i for j < count − 1
    let tri = Tensor::from_fn(&[count - 1, count], |k| if k % count <= k / count { 1.0 } else { 0.0 });
    let pm = tape.reshape(p, &[count, 1])?;
    let y = tape.matmul(tape.constant(tri), pm)?;
    Ok(Some(tape.reshape(y, &[count - 1])?))
}
