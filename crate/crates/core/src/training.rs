//! Losses, teacher forcing, AdamW and the toy training loop.

use serde::{Deserialize, Serialize};

use crate::axial::{decode_boundaries, interior_boundaries, GridSpec};
use crate::curved::{default_bound, non_crossing_var, polylines_var, smoothness_var};
use crate::data::{render_synthetic, RenderStyle, Sample, TableSpec};
use crate::error::{Error, Result};
use crate::grid::{grid_cells, CellRole, SpanGrid};
use crate::model::{FastTab, ModelConfig};
use crate::numerics::{grad_check_terms, mix64, Bound, GradCheckReport, Rng, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub counts: f64,
    pub header: f64,
    pub boundaries: f64,
    pub spans: f64,
    pub smoothness: f64,
    pub non_crossing: f64,
    /// Multiplier on the span loss of anchors with `rs > 1` or `cs > 1`.
    pub anchor_upweight: f64,
    /// Residual bound for the regularised polylines, as a multiple of half
    /// the smallest ground-truth interval. At 1 neighbouring curves cannot
    /// cross, so the non-crossing term only matters above 1.
    pub curve_bound_scale: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            counts: 1.0,
            header: 1.0,
            boundaries: 1.0,
            spans: 1.0,
            smoothness: 0.1,
            non_crossing: 0.1,
            anchor_upweight: 2.0,
            curve_bound_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherForcingSchedule {
    pub start_fraction: f64,
    pub end_fraction: f64,
    pub anneal_steps: usize,
    pub perturb_sigma: f64,
}

impl Default for TeacherForcingSchedule {
    fn default() -> Self {
        TeacherForcingSchedule {
            start_fraction: 1.0,
            end_fraction: 0.2,
            anneal_steps: 1000,
            perturb_sigma: 0.01,
        }
    }
}

/// Share of samples whose ROIs come from ground-truth boundaries: linear
/// from start to end over `anneal_steps`, then constant.
pub fn tf_fraction(step: usize, s: &TeacherForcingSchedule) -> f64 {
    if s.anneal_steps == 0 || step >= s.anneal_steps {
        return s.end_fraction;
    }
    let t = step as f64 / s.anneal_steps as f64;
    s.start_fraction + (s.end_fraction - s.start_fraction) * t
}

/// Gaussian jitter on interior boundaries, each move clipped to half the gap
/// towards its neighbour so the ordering survives.
pub fn perturb_boundaries(g: &GridSpec, sigma: f64, rng: &mut Rng) -> GridSpec {
    let jitter = |b: &[f64], rng: &mut Rng| {
        let mut out = b.to_vec();
        let n = b.len() - 1;
        for i in 1..n {
            let noise = sigma * rng.normal();
            let down = (b[i] - out[i - 1]) / 2.0;
            let up = (b[i + 1] - b[i]) / 2.0;
            out[i] = b[i] + noise.clamp(-down, up);
        }
        out
    };
    if sigma <= 0.0 {
        return g.clone();
    }
    let mut out = g.clone();
    out.row_bounds = jitter(&g.row_bounds, rng);
    out.col_bounds = jitter(&g.col_bounds, rng);
    out
}

/// Head outputs for one sample. Span logits cover every grid slot in
/// row-major order.
#[derive(Clone, Copy, Debug)]
pub struct Predictions {
    pub count_rows: Var,
    pub count_cols: Var,
    pub header: Var,
    pub row_intervals: Var,
    pub col_intervals: Var,
    pub rs_logits: Var,
    pub cs_logits: Var,
    /// Raw curved offsets, when the regularisers are on.
    pub offsets: Option<(Var, Var)>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub counts: Var,
    pub header: Var,
    pub boundaries: Var,
    pub spans: Var,
    pub smoothness: Option<Var>,
    pub non_crossing: Option<Var>,
    pub total: Var,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub counts: f64,
    pub header: f64,
    pub boundaries: f64,
    pub spans: f64,
    pub smoothness: f64,
    pub non_crossing: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn read(tape: &Tape<'_>, l: &LossVars) -> Self {
        let v = |x: Var| tape.value(x).item();
        LossBreakdown {
            counts: v(l.counts),
            header: v(l.header),
            boundaries: v(l.boundaries),
            spans: v(l.spans),
            smoothness: l.smoothness.map_or(0.0, v),
            non_crossing: l.non_crossing.map_or(0.0, v),
            total: v(l.total),
        }
    }

    fn accumulate(&mut self, o: &LossBreakdown, s: f64) {
        self.counts += s * o.counts;
        self.header += s * o.header;
        self.boundaries += s * o.boundaries;
        self.spans += s * o.spans;
        self.smoothness += s * o.smoothness;
        self.non_crossing += s * o.non_crossing;
        self.total += s * o.total;
    }

    pub fn is_finite(&self) -> bool {
        [self.counts, self.header, self.boundaries, self.spans, self.smoothness, self.non_crossing, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn scalar_ce(tape: &Tape<'_>, logits: Var, target: usize) -> Result<Var> {
    let k = tape.shape(logits)[0];
    if target >= k {
        return Err(Error::Consistency(format!("target class {target} exceeds {k} logits")));
    }
    let l = tape.reshape(logits, &[1, k])?;
    tape.cross_entropy(l, &[target], &[1.0], 1.0)
}

fn boundary_mse(tape: &Tape<'_>, logits: Var, gt: &[f64]) -> Result<Option<Var>> {
    let count = gt.len() - 1;
    let Some(pred) = interior_boundaries(tape, logits, count)? else {
        return Ok(None);
    };
    let target = tape.constant(Tensor::vector(gt[1..count].to_vec()));
    Ok(Some(tape.mean(tape.square(tape.sub(pred, target)?))))
}

/// Four supervised terms plus the optional curved regularisers. Counts use
/// class `count − 1`; the header class is the header row count; boundary MSE
/// covers interior boundaries only, averaged per axis and summed over axes;
/// span cross-entropy is averaged over anchors, covered slots carry weight 0.
pub fn compute_losses(tape: &Tape<'_>, pred: &Predictions, grid: &GridSpec, spans: &SpanGrid, w: &LossWeights) -> Result<LossVars> {
    if spans.rows != grid.rows || spans.cols != grid.cols {
        return Err(Error::Consistency("spans and grid disagree on size".into()));
    }
    let counts = tape.add(
        scalar_ce(tape, pred.count_rows, grid.rows - 1)?,
        scalar_ce(tape, pred.count_cols, grid.cols - 1)?,
    )?;
    let header = scalar_ce(tape, pred.header, grid.header_rows)?;
    let zero = || tape.constant(Tensor::scalar(0.0));
    let mut boundaries = zero();
    for (logits, gt) in [(pred.row_intervals, &grid.row_bounds), (pred.col_intervals, &grid.col_bounds)] {
        if let Some(m) = boundary_mse(tape, logits, gt)? {
            boundaries = tape.add(boundaries, m)?;
        }
    }

    let n = grid.rows * grid.cols;
    let (mut rs_t, mut cs_t, mut weights) = (vec![0; n], vec![0; n], vec![0.0; n]);
    let mut anchors = 0usize;
    for (i, role) in spans.role.iter().enumerate() {
        if *role == CellRole::Anchor {
            anchors += 1;
            rs_t[i] = spans.rowspan[i] - 1;
            cs_t[i] = spans.colspan[i] - 1;
            let merged = spans.rowspan[i] > 1 || spans.colspan[i] > 1;
            weights[i] = if merged { w.anchor_upweight } else { 1.0 };
        }
    }
    for (logits, targets) in [(pred.rs_logits, &rs_t), (pred.cs_logits, &cs_t)] {
        let s = tape.shape(logits);
        if s.len() != 2 || s[0] != n {
            return Err(Error::dim("span logits", &s, &[n]));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= s[1]) {
            return Err(Error::Consistency(format!("span {} exceeds the cap {}", t + 1, s[1])));
        }
    }
    let norm = anchors.max(1) as f64;
    let spans_loss = tape.add(
        tape.cross_entropy(pred.rs_logits, &rs_t, &weights, norm)?,
        tape.cross_entropy(pred.cs_logits, &cs_t, &weights, norm)?,
    )?;

    let mut total = tape.scale(counts, w.counts);
    for (term, wt) in [(header, w.header), (boundaries, w.boundaries), (spans_loss, w.spans)] {
        total = tape.add(total, tape.scale(term, wt))?;
    }
    let (mut smoothness, mut non_crossing) = (None, None);
    if let Some((ro, co)) = pred.offsets {
        let mut sm = zero();
        let mut nc = zero();
        // base boundaries and bounds are constants: the regularisers only move the offsets
        for (off, base) in [(ro, &grid.row_bounds), (co, &grid.col_bounds)] {
            let polys = polylines_var(tape, off, base, w.curve_bound_scale * default_bound(base))?;
            sm = tape.add(sm, smoothness_var(tape, polys)?)?;
            nc = tape.add(nc, non_crossing_var(tape, polys)?)?;
        }
        total = tape.add(total, tape.scale(sm, w.smoothness))?;
        total = tape.add(total, tape.scale(nc, w.non_crossing))?;
        smoothness = Some(sm);
        non_crossing = Some(nc);
    }
    Ok(LossVars {
        counts,
        header,
        boundaries,
        spans: spans_loss,
        smoothness,
        non_crossing,
        total,
    })
}

/// Full forward pass for training. ROIs come from `roi_grid` (ground truth
/// or predicted boundaries at ground-truth counts).
pub fn forward_sample(
    model: &FastTab,
    tape: &Tape<'_>,
    p: &Bound,
    image: &Tensor,
    roi_grid: &GridSpec,
    curved: bool,
) -> Result<Predictions> {
    let lines = model.lines(tape, p, image)?;
    let pooled = model.pool(tape, lines.features, &grid_cells(roi_grid))?;
    let (rs_logits, cs_logits) = model.span_logits(tape, p, pooled)?;
    let offsets = if curved { Some(model.offsets(tape, p, &lines)?) } else { None };
    Ok(Predictions {
        count_rows: lines.count_rows,
        count_cols: lines.count_cols,
        header: lines.header,
        row_intervals: lines.row_intervals,
        col_intervals: lines.col_intervals,
        rs_logits,
        cs_logits,
        offsets,
    })
}

/// Grid with ground-truth counts and predicted boundary positions.
pub fn predicted_roi_grid(tape: &Tape<'_>, pred: &Predictions, gt: &GridSpec) -> Result<GridSpec> {
    let rows = decode_boundaries(tape.value(pred.row_intervals).data(), gt.rows)?;
    let cols = decode_boundaries(tape.value(pred.col_intervals).data(), gt.cols)?;
    GridSpec::new(gt.rows, gt.cols, gt.header_rows, rows, cols)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    /// Final learning rate as a fraction of `lr`.
    pub min_lr_fraction: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            clip_norm: 5.0,
            min_lr_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub schedule: TeacherForcingSchedule,
    pub loss: LossWeights,
    pub batch_size: usize,
    /// Adds the curved-separator regularisers to the loss.
    pub curved: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::toy(),
            optim: OptimConfig::default(),
            schedule: TeacherForcingSchedule::default(),
            loss: LossWeights::default(),
            batch_size: 1,
            curved: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let o = &self.optim;
        if !(o.lr >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        let s = &self.schedule;
        if !(0.0..=1.0).contains(&s.start_fraction) || !(0.0..=1.0).contains(&s.end_fraction) || s.end_fraction > s.start_fraction {
            return Err(Error::Config("teacher forcing fractions must satisfy 0 <= end <= start <= 1".into()));
        }
        Ok(())
    }
}

/// AdamW with decoupled weight decay and a cosine learning-rate curve.
#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: OptimConfig,
    total_steps: usize,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: OptimConfig, params: &[&Tensor], total_steps: usize) -> Self {
        let zeros = || params.iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamW {
            cfg,
            total_steps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let t = if self.total_steps == 0 { 1.0 } else { (step as f64 / self.total_steps as f64).min(1.0) };
        let floor = self.cfg.min_lr_fraction;
        self.cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }

    /// Clips `grads` in place to the configured global norm and applies one
    /// update. Returns the pre-clip norm.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &mut [Vec<f64>]) -> f64 {
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            let s = self.cfg.clip_norm / norm;
            grads.iter_mut().flatten().for_each(|g| *g *= s);
        }
        let lr = self.lr_at(self.step);
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (k, t) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                let g = grads[k][i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let step = (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
                *x -= lr * (step + c.weight_decay * *x);
            }
        }
        norm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub tf_fraction: f64,
    pub lr: f64,
    /// Mean over the epoch's samples.
    pub loss: LossBreakdown,
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(
    model: &FastTab,
    sample: &Sample,
    cfg: &TrainConfig,
    teacher: bool,
    rng: &mut Rng,
    dropout_seed: u64,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    sample.check_caps(&model.cfg.caps)?;
    let tape = Tape::training(dropout_seed);
    let p = model.params.bind(&tape);
    let gt = &sample.grid;
    let tf_grid = teacher.then(|| perturb_boundaries(gt, cfg.schedule.perturb_sigma, rng));
    let pred = match &tf_grid {
        Some(g) => forward_sample(model, &tape, &p, &sample.image, g, cfg.curved)?,
        None => {
            // lines first, then ROIs from the predicted boundaries
            let lines = model.lines(&tape, &p, &sample.image)?;
            let partial = Predictions {
                count_rows: lines.count_rows,
                count_cols: lines.count_cols,
                header: lines.header,
                row_intervals: lines.row_intervals,
                col_intervals: lines.col_intervals,
                rs_logits: lines.count_rows,
                cs_logits: lines.count_cols,
                offsets: None,
            };
            let roi = predicted_roi_grid(&tape, &partial, gt)?;
            let pooled = model.pool(&tape, lines.features, &grid_cells(&roi))?;
            let (rs_logits, cs_logits) = model.span_logits(&tape, &p, pooled)?;
            let offsets = if cfg.curved { Some(model.offsets(&tape, &p, &lines)?) } else { None };
            Predictions {
                rs_logits,
                cs_logits,
                offsets,
                ..partial
            }
        }
    };
    let losses = compute_losses(&tape, &pred, gt, &sample.spans, &cfg.loss).map_err(|e| match e {
        Error::Consistency(message) => Error::Dataset {
            sample: sample.id.clone(),
            message,
        },
        other => other,
    })?;
    let breakdown = LossBreakdown::read(&tape, &losses);
    if !breakdown.is_finite() {
        return Ok((breakdown, Vec::new()));
    }
    let g = tape.backward(losses.total)?;
    let grads = p
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| g.get_or_zeros(v, t.numel()))
        .collect();
    Ok((breakdown, grads))
}

/// Trains in place. Deterministic for a given config seed: sample order,
/// teacher-forcing coins, perturbations and dropout masks all derive from it.
/// `on_epoch` sees each epoch's log as it completes.
pub fn train_toy(
    model: &mut FastTab,
    data: &[Sample],
    cfg: &TrainConfig,
    epochs: usize,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training needs at least one sample".into()));
    }
    for s in data {
        s.validate()?;
        s.check_caps(&model.cfg.caps)?;
    }
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * epochs;
    let mut opt = {
        let refs: Vec<&Tensor> = model.params.tensors().collect();
        AdamW::new(cfg.optim.clone(), &refs, total_steps)
    };
    let mut rng = Rng::new(cfg.seed).derive(0x7472_6169_6e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(epochs);
    let mut step = 0usize;
    for epoch in 0..epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.int_range(0, i));
        }
        let mut mean = LossBreakdown::default();
        let frac_at_start = tf_fraction(step, &cfg.schedule);
        let lr_at_start = opt.lr_at(step);
        for batch in order.chunks(cfg.batch_size) {
            let frac = tf_fraction(step, &cfg.schedule);
            let mut acc: Option<Vec<Vec<f64>>> = None;
            for &idx in batch {
                let teacher = rng.bernoulli(frac);
                let dropout_seed = mix64(rng.next_u64());
                let (b, grads) = sample_gradients(model, &data[idx], cfg, teacher, &mut rng, dropout_seed)?;
                if !b.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss at step {step} (sample {}): {b:?}",
                        data[idx].id
                    )));
                }
                mean.accumulate(&b, 1.0 / data.len() as f64);
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => a.iter_mut().flatten().zip(grads.iter().flatten()).for_each(|(x, y)| *x += y),
                }
            }
            let mut grads = acc.expect("batches are non-empty");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            let mut params: Vec<&mut Tensor> = model.params.tensors_mut().collect();
            let norm = opt.update(&mut params, &mut grads);
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("gradient norm at step {step}")));
            }
            step += 1;
        }
        let log = EpochLog {
            epoch,
            steps: step,
            tf_fraction: frac_at_start,
            lr: lr_at_start,
            loss: mean,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

const CURVED_GAIN: f64 = 10.0;

/// Names of the loss terms reported by [`model_grad_check`].
pub const GRAD_CHECK_TERMS: [&str; 6] = ["counts", "header", "boundaries", "spans", "smoothness", "non_crossing"];

#[derive(Clone, Debug)]
pub struct TermCheck {
    pub name: &'static str,
    /// Loss value at the checked point.
    pub value: f64,
    pub report: GradCheckReport,
}

/// Fixed 3×3 sample with one header row and a horizontal merge.
pub fn grad_check_sample(seed: u64) -> Result<Sample> {
    let spec = TableSpec {
        rows: 3,
        cols: 3,
        header_rows: 1,
        anchors: vec![(0, 0, 1, 2), (0, 2, 1, 1), (1, 0, 2, 1), (1, 1, 1, 1), (1, 2, 1, 1), (2, 1, 1, 1), (2, 2, 1, 1)],
    };
    let style = RenderStyle {
        min_col_px: 10,
        max_col_px: 14,
        min_row_px: 10,
        max_row_px: 14,
        padding: 2,
        ..RenderStyle::default()
    };
    render_synthetic("gradcheck", &spec, &style, &mut Rng::new(seed))
}

/// Central-difference check of every loss term against reverse mode on a
/// small model, over all parameters. Teacher-forced with unperturbed ground
/// truth and dropout off so the loss is a smooth function of the weights.
/// The curved head and residual bound are scaled up so the non-crossing
/// hinge is active.
pub fn model_grad_check(cfg: &ModelConfig, seed: u64, eps: f64, tol: f64) -> Result<Vec<TermCheck>> {
    let mut cfg = cfg.clone();
    cfg.span_dropout = 0.0;
    cfg.axial.dropout = 0.0;
    let mut model = FastTab::new(cfg, seed)?;
    for name in ["curved.rows.w", "curved.cols.w"] {
        let id = model.params.id_of(name).expect("curved head parameters exist");
        model.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v *= CURVED_GAIN);
    }
    let sample = grad_check_sample(seed)?;
    sample.check_caps(&model.cfg.caps)?;
    let weights = LossWeights {
        curve_bound_scale: 4.0,
        ..LossWeights::default()
    };
    let theta: Vec<Tensor> = model.params.tensors().cloned().collect();
    let terms = |tape: &Tape<'_>, vars: &[Var]| -> Result<Vec<Var>> {
        let p = Bound::from_vars(vars.to_vec());
        let pred = forward_sample(&model, tape, &p, &sample.image, &sample.grid, true)?;
        let l = compute_losses(tape, &pred, &sample.grid, &sample.spans, &weights)?;
        Ok(vec![
            l.counts,
            l.header,
            l.boundaries,
            l.spans,
            l.smoothness.expect("curved terms requested"),
            l.non_crossing.expect("curved terms requested"),
        ])
    };
    let values: Vec<f64> = {
        let tape = Tape::inference();
        let vars: Vec<Var> = theta.iter().map(|t| tape.param(t)).collect();
        let outs = terms(&tape, &vars)?;
        outs.iter().map(|&o| tape.value(o).item()).collect()
    };
    let reports = grad_check_terms(&theta, terms, eps, tol)?;
    Ok(GRAD_CHECK_TERMS
        .into_iter()
        .zip(values)
        .zip(reports)
        .map(|((name, value), report)| TermCheck { name, value, report })
        .collect())
}
