//! Model configuration, parameters and the shared forward pieces.

use serde::{Deserialize, Serialize};

use crate::axial::{AxialConfig, AxialEncoder, Axis, CountHead, HeadVariant, IntervalHead};
use crate::curved::{CurvedHead, DEFAULT_SAMPLES};
use crate::encoder::{prepare_image, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::grid::{roi_pool, CellRect, SpanHead};
use crate::numerics::{Bound, ParamStore, Rng, Tape, Tensor, Var};
use crate::trm::{global_pool, Trm};

/// Maximum rows, columns, rowspan and colspan the heads can express.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub r_max: usize,
    pub c_max: usize,
    pub rs_max: usize,
    pub cs_max: usize,
}

impl Caps {
    pub const PUBTABNET: Caps = Caps::new(50, 30, 10, 10);
    pub const FINTABNET: Caps = Caps::new(85, 30, 10, 25);
    pub const PUBTABLES1M: Caps = Caps::new(85, 52, 55, 40);
    pub const SCITSR: Caps = Caps::new(60, 66, 17, 17);

    pub const fn new(r_max: usize, c_max: usize, rs_max: usize, cs_max: usize) -> Self {
        Caps {
            r_max,
            c_max,
            rs_max,
            cs_max,
        }
    }

    /// Dataset preset by name, or `"R,C,RS,CS"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pubtabnet" => return Ok(Self::PUBTABNET),
            "fintabnet" => return Ok(Self::FINTABNET),
            "pubtables1m" | "pubtables-1m" => return Ok(Self::PUBTABLES1M),
            "scitsr" => return Ok(Self::SCITSR),
            _ => {}
        }
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("caps {s:?}: expected a preset name or R,C,RS,CS")))?;
        match parts[..] {
            [r, c, rs, cs] if r > 0 && c > 0 && rs > 0 && cs > 0 => Ok(Caps::new(r, c, rs, cs)),
            _ => Err(Error::Config(format!("caps {s:?}: expected four positive integers"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub d_z: usize,
    /// TRM iterations `T`.
    pub iterations: usize,
    pub axial: AxialConfig,
    pub span_hidden: [usize; 3],
    pub span_dropout: f64,
    pub caps: Caps,
    /// Polyline samples `K` for curved separators.
    pub curve_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// Desk-scale configuration: `d_model = 32`, `T = 3`.
    pub fn toy() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            d_z: 32,
            iterations: 3,
            axial: AxialConfig::default(),
            span_hidden: [64, 64, 32],
            span_dropout: 0.1,
            caps: Caps::new(8, 8, 4, 4),
            curve_samples: DEFAULT_SAMPLES,
        }
    }

    /// Smallest configuration, used for finite-difference checks.
    pub fn tiny() -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                d_model: 8,
                stage_channels: [4, 4, 8, 8],
            },
            d_z: 8,
            iterations: 3,
            axial: AxialConfig {
                d_seq: 8,
                layers: 2,
                heads: 4,
                d_ff: 16,
                dropout: 0.0,
                head_variant: HeadVariant::Transformer,
                mlp_hidden: 16,
                max_len: 8,
            },
            span_hidden: [16, 16, 8],
            span_dropout: 0.0,
            caps: Caps::new(4, 4, 3, 3),
            curve_samples: 8,
        }
    }

    /// Dimensions stated for the full model.
    pub fn full(caps: Caps) -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                d_model: 1024,
                stage_channels: [128, 256, 512, 1024],
            },
            d_z: 1024,
            iterations: 6,
            axial: AxialConfig {
                d_seq: 256,
                layers: 2,
                heads: 4,
                d_ff: 512,
                dropout: 0.1,
                head_variant: HeadVariant::Transformer,
                mlp_hidden: 256,
                max_len: 128,
            },
            span_hidden: [512, 512, 256],
            span_dropout: 0.1,
            caps,
            curve_samples: DEFAULT_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.axial.validate()?;
        if self.d_z == 0 || self.span_hidden.contains(&0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        let c = self.caps;
        if c.r_max == 0 || c.c_max == 0 || c.rs_max == 0 || c.cs_max == 0 {
            return Err(Error::Config("caps must be positive".into()));
        }
        if self.curve_samples == 0 {
            return Err(Error::Config("curve_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the lines head produces for one image.
#[derive(Clone, Copy, Debug)]
pub struct LinesOut {
    /// `[d_model, H_f, W_f]`.
    pub features: Var,
    /// `[d_z]`.
    pub z: Var,
    /// `[H_f, d_seq]`.
    pub rows_enc: Var,
    /// `[W_f, d_seq]`.
    pub cols_enc: Var,
    /// `[R_max]`.
    pub count_rows: Var,
    /// `[C_max]`.
    pub count_cols: Var,
    /// `[R_max + 1]`.
    pub header: Var,
    /// `[R_max + 1]`.
    pub row_intervals: Var,
    /// `[C_max + 1]`.
    pub col_intervals: Var,
}

#[derive(Clone, Debug)]
pub struct FastTab {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    encoder: Encoder,
    trm: Trm,
    rows_enc: AxialEncoder,
    cols_enc: AxialEncoder,
    counts: CountHead,
    row_intervals: IntervalHead,
    col_intervals: IntervalHead,
    span: SpanHead,
    curved: CurvedHead,
}

impl FastTab {
    /// Freshly initialised model; identical seeds give identical weights.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let mut s = ParamStore::new();
        let d_model = cfg.encoder.d_model;
        let d_seq = cfg.axial.d_seq;
        let caps = cfg.caps;
        let encoder = Encoder::new(&mut s, &cfg.encoder, &mut rng)?;
        let trm = Trm::new(&mut s, cfg.d_z, d_model, &mut rng);
        let rows_enc = AxialEncoder::new(&mut s, Axis::Rows, d_model, &cfg.axial, &mut rng)?;
        let cols_enc = AxialEncoder::new(&mut s, Axis::Cols, d_model, &cfg.axial, &mut rng)?;
        let counts = CountHead::new(&mut s, cfg.d_z, d_seq, caps.r_max, caps.c_max, &mut rng);
        let row_intervals = IntervalHead::new(&mut s, "intervals.rows", d_seq, caps.r_max, &mut rng);
        let col_intervals = IntervalHead::new(&mut s, "intervals.cols", d_seq, caps.c_max, &mut rng);
        let span = SpanHead::new(&mut s, d_model, cfg.span_hidden, caps.rs_max, caps.cs_max, cfg.span_dropout, &mut rng);
        let curved = CurvedHead::new(&mut s, d_seq, caps.r_max, caps.c_max, &mut rng);
        Ok(FastTab {
            cfg,
            params: s,
            encoder,
            trm,
            rows_enc,
            cols_enc,
            counts,
            row_intervals,
            col_intervals,
            span,
            curved,
        })
    }

    /// Model with the given parameter values, which must match the
    /// configuration's names and shapes exactly.
    pub fn from_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = FastTab::new(cfg, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (name, t) in params.iter() {
            model.params.set(name, t.clone())?;
        }
        Ok(model)
    }

    pub fn set_iterations(&mut self, t: usize) {
        self.cfg.iterations = t;
    }

    /// Encoder through interval logits.
    pub fn lines(&self, tape: &Tape<'_>, p: &Bound, image: &Tensor) -> Result<LinesOut> {
        let x = tape.constant(prepare_image(image)?);
        let features = self.encoder.forward(tape, p, x)?;
        self.lines_from_features(tape, p, features)
    }

    pub fn encode(&self, tape: &Tape<'_>, p: &Bound, image: &Tensor) -> Result<Var> {
        let x = tape.constant(prepare_image(image)?);
        self.encoder.forward(tape, p, x)
    }

    /// Encoder on an already prepared image.
    pub fn encoder_forward(&self, tape: &Tape<'_>, p: &Bound, prepared: Var) -> Result<Var> {
        self.encoder.forward(tape, p, prepared)
    }

    pub fn refine(&self, tape: &Tape<'_>, p: &Bound, features: Var) -> Result<Var> {
        let g = global_pool(tape, features)?;
        self.trm.forward(tape, p, g, self.cfg.iterations)
    }

    /// Row and column token encodings.
    pub fn axial(&self, tape: &Tape<'_>, p: &Bound, features: Var) -> Result<(Var, Var)> {
        Ok((self.rows_enc.encode(tape, p, features)?, self.cols_enc.encode(tape, p, features)?))
    }

    /// Count, header and interval logits.
    pub fn heads(&self, tape: &Tape<'_>, p: &Bound, z: Var, rows_enc: Var, cols_enc: Var) -> Result<(Var, Var, Var, Var, Var)> {
        let (count_rows, count_cols, header) = self.counts.forward(tape, p, z, rows_enc, cols_enc)?;
        let row_intervals = self.row_intervals.forward(tape, p, rows_enc)?;
        let col_intervals = self.col_intervals.forward(tape, p, cols_enc)?;
        Ok((count_rows, count_cols, header, row_intervals, col_intervals))
    }

    pub fn lines_from_features(&self, tape: &Tape<'_>, p: &Bound, features: Var) -> Result<LinesOut> {
        let z = self.refine(tape, p, features)?;
        let (rows_enc, cols_enc) = self.axial(tape, p, features)?;
        let (count_rows, count_cols, header, row_intervals, col_intervals) = self.heads(tape, p, z, rows_enc, cols_enc)?;
        Ok(LinesOut {
            features,
            z,
            rows_enc,
            cols_enc,
            count_rows,
            count_cols,
            header,
            row_intervals,
            col_intervals,
        })
    }

    /// Pooled per-rect features `[n, d_model]`.
    pub fn pool(&self, tape: &Tape<'_>, features: Var, rects: &[CellRect]) -> Result<Var> {
        roi_pool(tape, features, rects)
    }

    /// Span logits `([n, RS_max], [n, CS_max])` from pooled features.
    pub fn span_logits(&self, tape: &Tape<'_>, p: &Bound, pooled: Var) -> Result<(Var, Var)> {
        self.span.forward(tape, p, pooled)
    }

    /// Raw curved offsets `([R_max+1, K], [C_max+1, K])`.
    pub fn offsets(&self, tape: &Tape<'_>, p: &Bound, lines: &LinesOut) -> Result<(Var, Var)> {
        self.curved_offsets(tape, p, lines.rows_enc, lines.cols_enc)
    }

    pub fn curved_offsets(&self, tape: &Tape<'_>, p: &Bound, rows_enc: Var, cols_enc: Var) -> Result<(Var, Var)> {
        self.curved.forward(tape, p, rows_enc, cols_enc, self.cfg.curve_samples)
    }

    /// Sets every curved-head weight to zero (straight separators).
    pub fn zero_curved_head(&mut self) {
        for name in ["curved.rows.w", "curved.rows.b", "curved.cols.w", "curved.cols.b"] {
            let id = self.params.id_of(name).expect("curved head parameters exist");
            let t = self.params.get_mut(id);
            t.data_mut().fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps_presets_and_lists() {
        assert_eq!(Caps::parse("PubTabNet").unwrap(), Caps::new(50, 30, 10, 10));
        assert_eq!(Caps::parse("fintabnet").unwrap(), Caps::new(85, 30, 10, 25));
        assert_eq!(Caps::parse("pubtables1m").unwrap(), Caps::new(85, 52, 55, 40));
        assert_eq!(Caps::parse("scitsr").unwrap(), Caps::new(60, 66, 17, 17));
        assert_eq!(Caps::parse("6, 6, 2, 2").unwrap(), Caps::new(6, 6, 2, 2));
        assert!(Caps::parse("6,6,2").is_err());
        assert!(Caps::parse("6,0,2,2").is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = FastTab::new(ModelConfig::tiny(), 5).unwrap();
        let b = FastTab::new(ModelConfig::tiny(), 5).unwrap();
        let c = FastTab::new(ModelConfig::tiny(), 6).unwrap();
        assert!(a.params.tensors().zip(b.params.tensors()).all(|(x, y)| x == y));
        assert!(a.params.tensors().zip(c.params.tensors()).any(|(x, y)| x != y));
    }

    #[test]
    fn head_shapes() {
        let m = FastTab::new(ModelConfig::tiny(), 1).unwrap();
        let tape = Tape::inference();
        let p = m.params.bind(&tape);
        let img = Tensor::full(&[3, 40, 30], 1.0);
        let l = m.lines(&tape, &p, &img).unwrap();
        assert_eq!(tape.shape(l.features), vec![8, 3, 4]);
        assert_eq!(tape.shape(l.count_rows), vec![4]);
        assert_eq!(tape.shape(l.header), vec![5]);
        assert_eq!(tape.shape(l.row_intervals), vec![5]);
        assert_eq!(tape.shape(l.cols_enc), vec![4, 8]);
        let (ro, co) = m.offsets(&tape, &p, &l).unwrap();
        assert_eq!(tape.shape(ro), vec![5, 8]);
        assert_eq!(tape.shape(co), vec![5, 8]);
    }
}
