//! Grid generation, per-cell ROI pooling, the span classifier and span
//! conflict resolution.

use serde::{Deserialize, Serialize};

use crate::axial::GridSpec;
use crate::error::{Error, Result};
use crate::numerics::{Bound, Linear, ParamStore, Rng, Tape, Tensor, Var};

/// Normalised rectangle of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRect {
    pub r: usize,
    pub c: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// One rectangle per grid slot, row-major. Consecutive boundaries are
/// shared, so the rectangles partition the unit square.
pub fn grid_cells(g: &GridSpec) -> Vec<CellRect> {
    let mut out = Vec::with_capacity(g.rows * g.cols);
    for r in 0..g.rows {
        for c in 0..g.cols {
            out.push(CellRect {
                r,
                c,
                x0: g.col_bounds[c],
                y0: g.row_bounds[r],
                x1: g.col_bounds[c + 1],
                y1: g.row_bounds[r + 1],
            });
        }
    }
    out
}

/// ROI sampling points per axis.
pub const ROI_SAMPLES: usize = 2;

/// Bilinear sampling weights over a `h × w` feature grid for a 1×1 ROI-align
/// of `rect`. Returns `(flat index, weight)` pairs summing to 1.
///
/// The rect is mapped to continuous feature coordinates with half-pixel
/// alignment (`u · dim − 0.5`), sampled at `ROI_SAMPLES²` regular interior
/// points and averaged. Zero-area rects sample their centre.
pub fn roi_weights(rect: &CellRect, h: usize, w: usize) -> Vec<(usize, f64)> {
    let degenerate = rect.x1 <= rect.x0 || rect.y1 <= rect.y0;
    let s = if degenerate { 1 } else { ROI_SAMPLES };
    let mut acc: Vec<(usize, f64)> = Vec::with_capacity(s * s * 4);
    let per = 1.0 / (s * s) as f64;
    for i in 0..s {
        let fy = rect.y0 + (rect.y1 - rect.y0) * (i as f64 + 0.5) / s as f64;
        let py = fy * h as f64 - 0.5;
        for j in 0..s {
            let fx = rect.x0 + (rect.x1 - rect.x0) * (j as f64 + 0.5) / s as f64;
            let px = fx * w as f64 - 0.5;
            for (idx, wt) in bilinear_taps(py, px, h, w) {
                acc.push((idx, wt * per));
            }
        }
    }
    acc.sort_by_key(|&(i, _)| i);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
    for (i, wt) in acc {
        match merged.last_mut() {
            Some((j, v)) if *j == i => *v += wt,
            _ => merged.push((i, wt)),
        }
    }
    merged
}

/// Four-tap bilinear interpolation with border clamping.
fn bilinear_taps(py: f64, px: f64, h: usize, w: usize) -> [(usize, f64); 4] {
    let clamp = |p: f64, n: usize| p.clamp(0.0, (n - 1) as f64);
    let (py, px) = (clamp(py, h), clamp(px, w));
    let (y0, x0) = (py.floor() as usize, px.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ly, lx) = (py - y0 as f64, px - x0 as f64);
    [
        (y0 * w + x0, (1.0 - ly) * (1.0 - lx)),
        (y0 * w + x1, (1.0 - ly) * lx),
        (y1 * w + x0, ly * (1.0 - lx)),
        (y1 * w + x1, ly * lx),
    ]
}

/// Pooling matrix `[h·w, n_rects]` whose columns are ROI-align weights.
pub fn roi_matrix(rects: &[CellRect], h: usize, w: usize) -> Tensor {
    let n = rects.len();
    let mut m = Tensor::zeros(&[h * w, n]);
    for (k, rect) in rects.iter().enumerate() {
        for (idx, wt) in roi_weights(rect, h, w) {
            m.data_mut()[idx * n + k] += wt;
        }
    }
    m
}

/// Pools one feature vector per rect from `features: [d, h, w]`, giving
/// `[n_rects, d]`. Differentiable with respect to the features.
pub fn roi_pool(tape: &Tape<'_>, features: Var, rects: &[CellRect]) -> Result<Var> {
    let shape = tape.shape(features);
    let (d, h, w) = (shape[0], shape[1], shape[2]);
    let flat = tape.reshape(features, &[d, h * w])?;
    let m = tape.constant(roi_matrix(rects, h, w));
    // [n, hw] · [hw, d] computed as mᵀ · flatᵀ
    tape.matmul_t(m, flat, true, true)
}

/// Convenience: 1×1 ROI-align of a single rect over a plain feature tensor.
pub fn roi_align_1x1(features: &Tensor, rect: &CellRect) -> Vec<f64> {
    let (d, h, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let taps = roi_weights(rect, h, w);
    (0..d)
        .map(|c| {
            let plane = &features.data()[c * h * w..(c + 1) * h * w];
            taps.iter().map(|&(i, wt)| plane[i] * wt).sum()
        })
        .collect()
}

/// Span classifier: three linear stages with GELU (dropout after the first
/// two), followed by rowspan and colspan classifiers.
#[derive(Clone, Debug)]
pub struct SpanHead {
    pub stages: [Linear; 3],
    pub rowspan: Linear,
    pub colspan: Linear,
    pub dropout: f64,
}

impl SpanHead {
    pub fn new(store: &mut ParamStore, d_model: usize, hidden: [usize; 3], rs_max: usize, cs_max: usize, dropout: f64, rng: &mut Rng) -> Self {
        let gain = 2f64.sqrt();
        SpanHead {
            stages: [
                Linear::new(store, "span.fc1", d_model, hidden[0], true, gain, rng),
                Linear::new(store, "span.fc2", hidden[0], hidden[1], true, gain, rng),
                Linear::new(store, "span.fc3", hidden[1], hidden[2], true, gain, rng),
            ],
            rowspan: Linear::new(store, "span.rs", hidden[2], rs_max, true, 1.0, rng),
            colspan: Linear::new(store, "span.cs", hidden[2], cs_max, true, 1.0, rng),
            dropout,
        }
    }

    /// `u: [n_cells, d_model]` → `(rs_logits [n, RS_max], cs_logits [n, CS_max])`.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, u: Var) -> Result<(Var, Var)> {
        let mut h = u;
        for (i, stage) in self.stages.iter().enumerate() {
            h = stage.forward(tape, p, h)?;
            h = tape.gelu(h);
            if i < 2 {
                h = tape.dropout(h, self.dropout)?;
            }
        }
        Ok((self.rowspan.forward(tape, p, h)?, self.colspan.forward(tape, p, h)?))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellRole {
    Anchor,
    Covered { anchor_r: usize, anchor_c: usize },
}

/// Per-slot spans. `rowspan`/`colspan` are meaningful at anchors only and
/// zero at covered slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanGrid {
    pub rows: usize,
    pub cols: usize,
    pub rowspan: Vec<usize>,
    pub colspan: Vec<usize>,
    pub role: Vec<CellRole>,
}

impl SpanGrid {
    /// All slots are 1×1 anchors.
    pub fn simple(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        SpanGrid {
            rows,
            cols,
            rowspan: vec![1; n],
            colspan: vec![1; n],
            role: vec![CellRole::Anchor; n],
        }
    }

    /// Builds a grid from anchor list `(r, c, rs, cs)`, checking the tiling.
    pub fn from_anchors(rows: usize, cols: usize, anchors: &[(usize, usize, usize, usize)]) -> Result<Self> {
        let n = rows * cols;
        let mut g = SpanGrid {
            rows,
            cols,
            rowspan: vec![0; n],
            colspan: vec![0; n],
            role: vec![CellRole::Anchor; n],
        };
        let mut claimed = vec![false; n];
        for &(r, c, rs, cs) in anchors {
            if rs == 0 || cs == 0 || r + rs > rows || c + cs > cols {
                return Err(Error::Consistency(format!("span ({r},{c}) {rs}x{cs} exceeds {rows}x{cols} grid")));
            }
            for rr in r..r + rs {
                for cc in c..c + cs {
                    let k = rr * cols + cc;
                    if claimed[k] {
                        return Err(Error::Consistency(format!("slot ({rr},{cc}) claimed twice")));
                    }
                    claimed[k] = true;
                    g.role[k] = CellRole::Covered { anchor_r: r, anchor_c: c };
                }
            }
            let k = r * cols + c;
            g.role[k] = CellRole::Anchor;
            g.rowspan[k] = rs;
            g.colspan[k] = cs;
        }
        if let Some(k) = claimed.iter().position(|&x| !x) {
            return Err(Error::Consistency(format!("slot ({},{}) not covered", k / cols, k % cols)));
        }
        Ok(g)
    }

    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn is_anchor(&self, r: usize, c: usize) -> bool {
        self.role[self.idx(r, c)] == CellRole::Anchor
    }

    /// Anchors in row-major order as `(r, c, rs, cs)`.
    pub fn anchors(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let k = self.idx(r, c);
                if self.role[k] == CellRole::Anchor {
                    out.push((r, c, self.rowspan[k], self.colspan[k]));
                }
            }
        }
        out
    }

    /// `true` if every slot belongs to exactly one anchor's region.
    pub fn tiles(&self) -> bool {
        SpanGrid::from_anchors(self.rows, self.cols, &self.anchors()).is_ok_and(|g| g == *self)
    }

    pub fn has_merged(&self) -> bool {
        self.anchors().iter().any(|&(_, _, rs, cs)| rs > 1 || cs > 1)
    }
}

/// Turns per-slot span predictions into a tiling.
///
/// Row-major scan: each unclaimed slot becomes an anchor whose spans are
/// clipped to the grid and shrunk (colspan first, then rowspan) until the
/// region is free. Predictions at already-claimed slots are ignored.
pub fn resolve_spans(rs_pred: &[usize], cs_pred: &[usize], rows: usize, cols: usize) -> SpanGrid {
    let n = rows * cols;
    let mut claimed = vec![false; n];
    let mut anchors = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if claimed[r * cols + c] {
                continue;
            }
            let k = r * cols + c;
            let mut rs = rs_pred[k].clamp(1, rows - r);
            let mut cs = cs_pred[k].clamp(1, cols - c);
            let mut free_cs = 1;
            while free_cs < cs && !claimed[r * cols + c + free_cs] {
                free_cs += 1;
            }
            cs = free_cs;
            let mut free_rs = 1;
            while free_rs < rs && (c..c + cs).all(|cc| !claimed[(r + free_rs) * cols + cc]) {
                free_rs += 1;
            }
            rs = free_rs;
            for rr in r..r + rs {
                for cc in c..c + cs {
                    claimed[rr * cols + cc] = true;
                }
            }
            anchors.push((r, c, rs, cs));
        }
    }
    SpanGrid::from_anchors(rows, cols, &anchors).expect("resolution always tiles")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_covers_unit_square() {
        let g = GridSpec::uniform(1, 1, 0);
        let cells = grid_cells(&g);
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].x0, cells[0].y0, cells[0].x1, cells[0].y1), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn uniform_two_by_two_quarters() {
        let cells = grid_cells(&GridSpec::uniform(2, 2, 0));
        let q: Vec<_> = cells.iter().map(|c| (c.x0, c.y0, c.x1, c.y1)).collect();
        assert_eq!(q, vec![(0.0, 0.0, 0.5, 0.5), (0.5, 0.0, 1.0, 0.5), (0.0, 0.5, 0.5, 1.0), (0.5, 0.5, 1.0, 1.0)]);
    }

    #[test]
    fn boundary_lookup() {
        let g = GridSpec::new(2, 2, 0, vec![0.0, 0.3, 1.0], vec![0.0, 0.6, 1.0]).unwrap();
        let rect = grid_cells(&g)[2];
        assert_eq!((rect.r, rect.c), (1, 0));
        assert_eq!((rect.x0, rect.x1, rect.y0, rect.y1), (0.0, 0.6, 0.3, 1.0));
    }

    #[test]
    fn roi_constant_map() {
        let f = Tensor::full(&[2, 3, 5], 0.25);
        let rect = CellRect { r: 0, c: 0, x0: 0.1, y0: 0.2, x1: 0.7, y1: 0.9 };
        for v in roi_align_1x1(&f, &rect) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn roi_full_map_symmetric() {
        let f = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let rect = CellRect { r: 0, c: 0, x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };
        // samples at quarter points map to feature coords 0 and 1 exactly
        assert_eq!(roi_align_1x1(&f, &rect), vec![2.5]);
    }

    #[test]
    fn roi_impulse_cell() {
        // 1×2×2 map with an impulse at (0,0); rect equal to that feature cell.
        let f = Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let rect = CellRect { r: 0, c: 0, x0: 0.0, y0: 0.0, x1: 0.5, y1: 0.5 };
        // sample coords: u ∈ {0.125, 0.375} → p = 2u − 0.5 ∈ {−0.25, 0.25};
        // clamped to {0, 0.25}; weight on index 0 per axis: {1, 0.75}.
        let per_axis: f64 = (1.0 + 0.75) / 2.0;
        let v = roi_align_1x1(&f, &rect)[0];
        assert!((v - per_axis * per_axis).abs() < 1e-15, "{v}");
    }

    #[test]
    fn roi_degenerate_rect_samples_centre() {
        let f = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let rect = CellRect { r: 0, c: 0, x0: 0.5, y0: 0.0, x1: 0.5, y1: 1.0 };
        // centre x = 0.5 → p = 0.5 → halfway between both features
        assert_eq!(roi_align_1x1(&f, &rect), vec![0.5]);
    }

    #[test]
    fn roi_union_lies_between_parts() {
        let f = Tensor::from_fn(&[1, 4, 4], |i| ((i * 37) % 11) as f64);
        let top = CellRect { r: 0, c: 0, x0: 0.0, y0: 0.0, x1: 1.0, y1: 0.5 };
        let bottom = CellRect { r: 1, c: 0, x0: 0.0, y0: 0.5, x1: 1.0, y1: 1.0 };
        let union = CellRect { r: 0, c: 0, x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };
        let (a, b, u) = (roi_align_1x1(&f, &top)[0], roi_align_1x1(&f, &bottom)[0], roi_align_1x1(&f, &union)[0]);
        assert!(u >= a.min(b) - 1e-12 && u <= a.max(b) + 1e-12, "{a} {b} {u}");
    }

    #[test]
    fn resolve_all_ones() {
        let g = resolve_spans(&[1; 6], &[1; 6], 2, 3);
        assert_eq!(g, SpanGrid::simple(2, 3));
    }

    #[test]
    fn resolve_horizontal_merge() {
        let g = resolve_spans(&[1, 1, 1, 1], &[2, 1, 1, 1], 2, 2);
        assert_eq!(g.anchors(), vec![(0, 0, 1, 2), (1, 0, 1, 1), (1, 1, 1, 1)]);
        assert_eq!(g.role[1], CellRole::Covered { anchor_r: 0, anchor_c: 0 });
    }

    #[test]
    fn resolve_ignores_covered_prediction() {
        let g = resolve_spans(&[1, 1, 1, 1], &[2, 2, 1, 1], 2, 2);
        assert_eq!(g.anchors(), vec![(0, 0, 1, 2), (1, 0, 1, 1), (1, 1, 1, 1)]);
    }

    #[test]
    fn resolve_shrinks_against_rowspan_above() {
        // (0,1) spans down two rows; (1,0) asks for 2 columns and must shrink.
        let g = resolve_spans(&[1, 2, 1, 1, 1, 1], &[1, 1, 1, 2, 1, 1], 2, 3);
        assert_eq!(g.anchors(), vec![(0, 0, 1, 1), (0, 1, 2, 1), (0, 2, 1, 1), (1, 0, 1, 1), (1, 2, 1, 1)]);
    }

    #[test]
    fn resolve_clips_to_edges() {
        let g = resolve_spans(&[9], &[9], 1, 1);
        assert_eq!(g.anchors(), vec![(0, 0, 1, 1)]);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn from_anchors_rejects_gaps_and_overlaps() {
        assert!(SpanGrid::from_anchors(1, 2, &[(0, 0, 1, 1)]).is_err());
        assert!(SpanGrid::from_anchors(1, 2, &[(0, 0, 1, 2), (0, 1, 1, 1)]).is_err());
    }
}
