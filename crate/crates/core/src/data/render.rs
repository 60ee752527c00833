use serde::{Deserialize, Serialize};

use super::{PixelBox, Sample};
use crate::axial::GridSpec;
use crate::error::{Error, Result};
use crate::grid::SpanGrid;
use crate::numerics::{Rng, Tensor};

/// Logical layout to render.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableSpec {
    pub rows: usize,
    pub cols: usize,
    pub header_rows: usize,
    /// `(r, c, rs, cs)` anchors tiling the grid.
    pub anchors: Vec<(usize, usize, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub ruled: bool,
    pub min_col_px: usize,
    pub max_col_px: usize,
    pub min_row_px: usize,
    pub max_row_px: usize,
    /// Pixel gap kept between a cell edge and its text.
    pub padding: usize,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            ruled: true,
            min_col_px: 18,
            max_col_px: 32,
            min_row_px: 12,
            max_row_px: 20,
            padding: 3,
        }
    }
}

/// Random layout: `1..=max_rows × 1..=max_cols`, up to two header rows,
/// occasional merges of at most `max_span` that never cross the header
/// boundary.
pub fn random_table_spec(rng: &mut Rng, max_rows: usize, max_cols: usize, max_span: usize) -> TableSpec {
    let rows = rng.int_range(1, max_rows);
    let cols = rng.int_range(1, max_cols);
    let header_rows = if rows > 1 && rng.bernoulli(0.6) { rng.int_range(1, 2.min(rows - 1)) } else { 0 };
    let mut taken = vec![false; rows * cols];
    let mut anchors = Vec::new();
    for r in 0..rows {
        let row_limit = if r < header_rows { header_rows } else { rows };
        for c in 0..cols {
            if taken[r * cols + c] {
                continue;
            }
            let merge = max_span > 1 && rng.bernoulli(0.15);
            let (want_rs, want_cs) = if merge {
                if rng.bernoulli(0.5) {
                    (1, rng.int_range(2, max_span))
                } else {
                    (rng.int_range(2, max_span), 1)
                }
            } else {
                (1, 1)
            };
            let mut cs = 1;
            while cs < want_cs && c + cs < cols && !taken[r * cols + c + cs] {
                cs += 1;
            }
            let mut rs = 1;
            while rs < want_rs && r + rs < row_limit && (c..c + cs).all(|k| !taken[(r + rs) * cols + k]) {
                rs += 1;
            }
            for rr in r..r + rs {
                for k in c..c + cs {
                    taken[rr * cols + k] = true;
                }
            }
            anchors.push((r, c, rs, cs));
        }
    }
    TableSpec {
        rows,
        cols,
        header_rows,
        anchors,
    }
}

const MIN_HEIGHT: usize = 32;
const MIN_WIDTH: usize = 16;

fn sizes(rng: &mut Rng, n: usize, lo: usize, hi: usize, min_total: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|_| rng.int_range(lo, hi.max(lo))).collect();
    let total: usize = v.iter().sum();
    if total < min_total {
        let extra = min_total - total;
        for (i, s) in v.iter_mut().enumerate() {
            *s += extra / n + usize::from(i < extra % n);
        }
    }
    v
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    out.push(0);
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

struct Canvas {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn fill(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, rgb: [f64; 3]) {
        let (x1, y1) = (x1.min(self.w), y1.min(self.h));
        for (c, &v) in rgb.iter().enumerate() {
            for y in y0..y1 {
                let row = (c * self.h + y) * self.w;
                self.data[row + x0..row + x1].fill(v);
            }
        }
    }
}

/// Renders a white table with optional rules, shaded header rows and 1–3
/// dark word blocks per logical cell. The table fills the image, so grid
/// boundaries are pixel offsets divided by the image size.
pub fn render_synthetic(id: &str, spec: &TableSpec, style: &RenderStyle, rng: &mut Rng) -> Result<Sample> {
    let spans = SpanGrid::from_anchors(spec.rows, spec.cols, &spec.anchors).map_err(|e| Error::Dataset {
        sample: id.to_string(),
        message: format!("impossible span layout: {e}"),
    })?;
    if spec.header_rows > spec.rows {
        return Err(Error::Dataset {
            sample: id.to_string(),
            message: "header rows exceed rows".into(),
        });
    }
    let widths = sizes(rng, spec.cols, style.min_col_px, style.max_col_px, MIN_WIDTH);
    let heights = sizes(rng, spec.rows, style.min_row_px, style.max_row_px, MIN_HEIGHT);
    let (xs, ys) = (offsets(&widths), offsets(&heights));
    let (w, h) = (xs[spec.cols], ys[spec.rows]);
    let mut canvas = Canvas {
        h,
        w,
        data: vec![1.0; 3 * h * w],
    };
    if spec.header_rows > 0 {
        canvas.fill(0, 0, w, ys[spec.header_rows], [0.85, 0.88, 0.95]);
    }
    let ink = rng.uniform_range(0.0, 0.15);
    if style.ruled {
        let line = [ink, ink, ink];
        // outer frame
        canvas.fill(0, 0, w, 1, line);
        canvas.fill(0, h - 1, w, h, line);
        canvas.fill(0, 0, 1, h, line);
        canvas.fill(w - 1, 0, w, h, line);
        let owner = |r: usize, c: usize| match spans.role[spans.idx(r, c)] {
            crate::grid::CellRole::Anchor => (r, c),
            crate::grid::CellRole::Covered { anchor_r, anchor_c } => (anchor_r, anchor_c),
        };
        // interior rules, skipped inside merged cells; one pixel either side of the boundary
        for r in 1..spec.rows {
            for c in 0..spec.cols {
                if owner(r - 1, c) != owner(r, c) {
                    canvas.fill(xs[c], ys[r] - 1, xs[c + 1], ys[r] + 1, line);
                }
            }
        }
        for c in 1..spec.cols {
            for r in 0..spec.rows {
                if owner(r, c - 1) != owner(r, c) {
                    canvas.fill(xs[c] - 1, ys[r], xs[c] + 1, ys[r + 1], line);
                }
            }
        }
    }
    let mut text_boxes: Vec<PixelBox> = Vec::new();
    let pad = style.padding;
    for &(r, c, rs, cs) in &spec.anchors {
        let (x0, x1) = (xs[c] + pad, xs[c + cs].saturating_sub(pad));
        let (y0, y1) = (ys[r] + pad, ys[r + rs].saturating_sub(pad));
        if x1 <= x0 + 1 || y1 <= y0 + 1 {
            continue;
        }
        let line_h = ((y1 - y0) / 2).clamp(2, 6).min(y1 - y0);
        let top = y0 + (y1 - y0 - line_h) / 2;
        let words = rng.int_range(1, 3);
        let mut x = x0;
        for k in 0..words {
            let room = x1.saturating_sub(x);
            if room < 2 {
                break;
            }
            let len = rng.int_range(3, 12).min(room);
            if k > 0 && len < 3 {
                break;
            }
            let bx = [x, top, x + len, top + line_h];
            let shade = rng.uniform_range(0.05, 0.35);
            canvas.fill(bx[0], bx[1], bx[2], bx[3], [shade; 3]);
            text_boxes.push(bx);
            x += len + 3;
        }
    }
    let norm = |v: &[usize], total: usize| v.iter().map(|&p| p as f64 / total as f64).collect::<Vec<_>>();
    let grid = GridSpec::new(spec.rows, spec.cols, spec.header_rows, norm(&ys, h), norm(&xs, w))?;
    let image = Tensor::new(vec![3, h, w], canvas.data)?;
    Ok(Sample {
        id: id.to_string(),
        image,
        grid,
        spans,
        text_boxes,
        polylines: None,
    })
}
