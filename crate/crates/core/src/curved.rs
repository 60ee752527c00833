//! Curved separators: bounded residual polylines over the straight grid.

use serde::{Deserialize, Serialize};

use crate::axial::{sample_matrix, GridSpec};
use crate::error::Result;
use crate::grid::CellRect;
use crate::numerics::{Bound, Linear, ParamStore, Rng, Tape, Tensor, Var};

/// Default number of samples per boundary polyline.
pub const DEFAULT_SAMPLES: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvedGrid {
    pub base: GridSpec,
    pub samples: usize,
    /// `(R+1) × K`, row boundary `i` at `t_k = k/(K−1)` across the width.
    pub row_poly: Vec<Vec<f64>>,
    /// `(C+1) × K`, column boundary `j` at `t_k` down the height.
    pub col_poly: Vec<Vec<f64>>,
}

/// Half the smallest interval between consecutive boundaries.
pub fn default_bound(bounds: &[f64]) -> f64 {
    bounds
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
        / 2.0
}

/// Sample positions `t_k = k/(K−1)`.
pub fn sample_points(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5];
    }
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

fn polylines(base: &[f64], offsets: &[Vec<f64>], bound: f64, k: usize) -> Vec<Vec<f64>> {
    let last = base.len() - 1;
    base.iter()
        .enumerate()
        .map(|(i, &b)| {
            if i == 0 || i == last {
                return vec![b; k];
            }
            offsets[i].iter().map(|&o| b + bound * o.tanh()).collect()
        })
        .collect()
}

/// `y_i(t_k) = base.y_i + b·tanh(offset)`, outer boundaries pinned. Offsets
/// hold at least `R+1` (resp. `C+1`) rows of `K` values; `bounds` overrides
/// the per-axis default of half the smallest base interval.
pub fn decode_curved(
    base: &GridSpec,
    row_offsets: &[Vec<f64>],
    col_offsets: &[Vec<f64>],
    bounds: Option<(f64, f64)>,
) -> CurvedGrid {
    let k = row_offsets.first().map_or(0, Vec::len);
    let (by, bx) = bounds.unwrap_or_else(|| (default_bound(&base.row_bounds), default_bound(&base.col_bounds)));
    CurvedGrid {
        base: base.clone(),
        samples: k,
        row_poly: polylines(&base.row_bounds, row_offsets, by, k),
        col_poly: polylines(&base.col_bounds, col_offsets, bx, k),
    }
}

/// Sum of squared second differences along the polyline.
pub fn smoothness_penalty(poly: &[f64]) -> f64 {
    poly.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2)).sum()
}

/// `Σ_i Σ_k max(0, poly_i(t_k) − poly_{i+1}(t_k))²`.
pub fn non_crossing_penalty(polys: &[Vec<f64>]) -> f64 {
    polys
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).max(0.0).powi(2)).sum::<f64>())
        .sum()
}

/// Axis-aligned bounding box of the curved region of slot `(r, c)`.
pub fn curved_cell_rect(cg: &CurvedGrid, r: usize, c: usize) -> CellRect {
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    CellRect {
        r,
        c,
        x0: min(&cg.col_poly[c]),
        y0: min(&cg.row_poly[r]),
        x1: max(&cg.col_poly[c + 1]),
        y1: max(&cg.row_poly[r + 1]),
    }
}

/// All slot rects of a curved grid, row-major.
pub fn curved_cells(cg: &CurvedGrid) -> Vec<CellRect> {
    let (rows, cols) = (cg.base.rows, cg.base.cols);
    (0..rows * cols).map(|k| curved_cell_rect(cg, k / cols, k % cols)).collect()
}

/// Offset head: boundary offsets for each axis read from the orthogonal
/// axis' encoded tokens and resampled to `K` points.
#[derive(Clone, Debug)]
pub struct CurvedHead {
    pub rows: Linear,
    pub cols: Linear,
}

impl CurvedHead {
    pub fn new(store: &mut ParamStore, d_seq: usize, r_max: usize, c_max: usize, rng: &mut Rng) -> Self {
        CurvedHead {
            rows: Linear::new(store, "curved.rows", d_seq, r_max + 1, true, 0.1, rng),
            cols: Linear::new(store, "curved.cols", d_seq, c_max + 1, true, 0.1, rng),
        }
    }

    /// `(row offsets [R_max+1, K], col offsets [C_max+1, K])` from row
    /// tokens `[H_f, d]` and column tokens `[W_f, d]`.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, rows_enc: Var, cols_enc: Var, k: usize) -> Result<(Var, Var)> {
        let ts = sample_points(k);
        let along = |head: &Linear, tokens: Var| -> Result<Var> {
            let per_pos = head.forward(tape, p, tokens)?; // [L, n_bounds]
            let len = tape.shape(tokens)[0];
            let s = tape.constant(sample_matrix(len, &ts)); // [K, L]
            tape.matmul_t(per_pos, s, true, true) // [n_bounds, K]
        };
        Ok((along(&self.rows, cols_enc)?, along(&self.cols, rows_enc)?))
    }
}

/// Differentiable polylines for the first `n + 1` boundaries given constant
/// base boundaries and bound: `base + b·tanh(offsets)` with the outer rows
/// pinned.
pub fn polylines_var(tape: &Tape<'_>, offsets: Var, base: &[f64], bound: f64) -> Result<Var> {
    let n1 = base.len();
    let k = tape.shape(offsets)[1];
    let off = tape.slice_first(offsets, 0, n1)?;
    let scale = Tensor::from_fn(&[n1, k], |i| if i / k == 0 || i / k == n1 - 1 { 0.0 } else { bound });
    let moved = tape.mul(tape.tanh(off), tape.constant(scale))?;
    let base_t = Tensor::from_fn(&[n1, k], |i| base[i / k]);
    tape.add(moved, tape.constant(base_t))
}

/// Differentiable [`smoothness_penalty`] summed over all rows of `[n, K]`.
pub fn smoothness_var(tape: &Tape<'_>, polys: Var) -> Result<Var> {
    let k = tape.shape(polys)[1];
    if k < 3 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let d = Tensor::from_fn(&[k, k - 2], |i| {
        let (row, col) = (i / (k - 2), i % (k - 2));
        match row as isize - col as isize {
            0 | 2 => 1.0,
            1 => -2.0,
            _ => 0.0,
        }
    });
    let second = tape.matmul(polys, tape.constant(d))?;
    Ok(tape.sum(tape.square(second)))
}

/// Differentiable [`non_crossing_penalty`] over the rows of `[n, K]`.
pub fn non_crossing_var(tape: &Tape<'_>, polys: Var) -> Result<Var> {
    let n = tape.shape(polys)[0];
    if n < 2 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let lower = tape.slice_first(polys, 0, n - 1)?;
    let upper = tape.slice_first(polys, 1, n)?;
    let gap = tape.relu(tape.sub(lower, upper)?);
    Ok(tape.sum(tape.square(gap)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::grid_cells;

    fn straight(rows: usize, cols: usize, k: usize) -> (GridSpec, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (GridSpec::uniform(rows, cols, 0), vec![vec![0.0; k]; rows + 1], vec![vec![0.0; k]; cols + 1])
    }

    #[test]
    fn zero_offsets_are_straight() {
        let (g, ro, co) = straight(3, 2, 8);
        let cg = decode_curved(&g, &ro, &co, None);
        for (poly, &b) in cg.row_poly.iter().zip(&g.row_bounds) {
            assert!(poly.iter().all(|&y| y == b));
        }
        assert_eq!(curved_cells(&cg), grid_cells(&g));
    }

    #[test]
    fn saturated_offsets_hit_the_bound() {
        let (g, mut ro, co) = straight(2, 1, 4);
        ro[1] = vec![1e3, -1e3, 0.0, 0.0];
        let cg = decode_curved(&g, &ro, &co, Some((0.1, 0.1)));
        assert_eq!(cg.row_poly[1][0], 0.6);
        assert_eq!(cg.row_poly[1][1], 0.4);
        // outer rows stay pinned whatever the offsets say
        ro[0] = vec![5.0; 4];
        let cg = decode_curved(&g, &ro, &co, Some((0.1, 0.1)));
        assert!(cg.row_poly[0].iter().all(|&y| y == 0.0));
    }

    #[test]
    fn single_point_formula() {
        let (g, mut ro, co) = straight(2, 1, 3);
        ro[1][1] = 0.5f64.atanh();
        let cg = decode_curved(&g, &ro, &co, Some((0.1, 0.1)));
        assert!((cg.row_poly[1][1] - 0.55).abs() < 1e-15);
    }

    #[test]
    fn penalties() {
        assert_eq!(smoothness_penalty(&[0.0, 0.25, 0.5, 0.75]), 0.0);
        assert!((smoothness_penalty(&[0.0, 0.1, 0.0]) - 0.04).abs() < 1e-15);
        assert_eq!(smoothness_penalty(&[0.0, 1.0]), 0.0);
        let polys = vec![vec![0.0, 0.0], vec![0.5, 0.4], vec![0.45, 1.0]];
        assert!((non_crossing_penalty(&polys) - 0.05f64.powi(2)).abs() < 1e-15);
        assert_eq!(non_crossing_penalty(&[vec![0.0; 3], vec![1.0; 3]]), 0.0);
    }

    #[test]
    fn dipping_boundary_moves_rect() {
        let (g, mut ro, co) = straight(2, 2, 5);
        ro[1][2] = 0.5f64.atanh();
        let cg = decode_curved(&g, &ro, &co, Some((0.1, 0.1)));
        let below = curved_cell_rect(&cg, 1, 0);
        assert!((below.y0 - 0.5).abs() < 1e-15);
        let above = curved_cell_rect(&cg, 0, 0);
        assert!((above.y1 - 0.55).abs() < 1e-15);
    }

    #[test]
    fn tape_penalties_match_plain() {
        let tape = Tape::inference();
        let rows = vec![vec![0.0, 0.0, 0.0, 0.0], vec![0.3, 0.5, 0.2, 0.6], vec![0.4, 0.45, 0.1, 1.0]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let v = tape.constant(Tensor::new(vec![3, 4], flat).unwrap());
        let s = tape.value(smoothness_var(&tape, v).unwrap()).item();
        let want: f64 = rows.iter().map(|r| smoothness_penalty(r)).sum();
        assert!((s - want).abs() < 1e-15);
        let n = tape.value(non_crossing_var(&tape, v).unwrap()).item();
        assert!((n - non_crossing_penalty(&rows)).abs() < 1e-15);
    }
}
