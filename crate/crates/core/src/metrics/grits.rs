use crate::structure::TableStructure;

/// Per-slot bounding box `(r0, c0, r1, c1)` of the owning logical cell, in
/// grid-index space with exclusive ends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopologyGrid {
    pub rows: usize,
    pub cols: usize,
    pub boxes: Vec<[usize; 4]>,
}

impl TopologyGrid {
    pub fn from_structure(t: &TableStructure) -> Self {
        let mut boxes = vec![[0; 4]; t.rows * t.cols];
        for c in &t.cells {
            let b = [c.row, c.col, c.row + c.rowspan, c.col + c.colspan];
            for r in c.row..c.row + c.rowspan {
                for k in c.col..c.col + c.colspan {
                    boxes[r * t.cols + k] = b;
                }
            }
        }
        TopologyGrid {
            rows: t.rows,
            cols: t.cols,
            boxes,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Box of slot `(r, c)` relative to the slot position.
    pub fn relative(&self, r: usize, c: usize) -> [i64; 4] {
        let b = self.boxes[r * self.cols + c];
        [
            b[0] as i64 - r as i64,
            b[1] as i64 - c as i64,
            b[2] as i64 - r as i64,
            b[3] as i64 - c as i64,
        ]
    }
}

/// IoU of two relative boxes.
pub fn box_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let ih = (a[2].min(b[2]) - a[0].max(b[0])).max(0);
    let iw = (a[3].min(b[3]) - a[1].max(b[1])).max(0);
    let inter = ih * iw;
    let area = |x: [i64; 4]| (x[2] - x[0]) * (x[3] - x[1]);
    let union = area(a) + area(b) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pairwise slot similarities `sim[((i·C_p + p)·R_g + j)·C_g + q]`.
struct SlotSim {
    rp: usize,
    cp: usize,
    rg: usize,
    cg: usize,
    v: Vec<f64>,
}

impl SlotSim {
    fn new(pred: &TopologyGrid, gt: &TopologyGrid) -> Self {
        let (rp, cp, rg, cg) = (pred.rows, pred.cols, gt.rows, gt.cols);
        let mut v = Vec::with_capacity(rp * cp * rg * cg);
        for i in 0..rp {
            for p in 0..cp {
                let a = pred.relative(i, p);
                for j in 0..rg {
                    for q in 0..cg {
                        v.push(box_iou(a, gt.relative(j, q)));
                    }
                }
            }
        }
        SlotSim { rp, cp, rg, cg, v }
    }

    fn at(&self, i: usize, p: usize, j: usize, q: usize) -> f64 {
        self.v[((i * self.cp + p) * self.rg + j) * self.cg + q]
    }
}

/// Best monotone alignment of two sequences under a pairwise score
/// `s[i·m + j]`: returns the total and the matched pairs.
pub fn align(n: usize, m: usize, s: &[f64]) -> (f64, Vec<(usize, usize)>) {
    let mut d = vec![0.0; (n + 1) * (m + 1)];
    let w = m + 1;
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + s[(i - 1) * m + j - 1];
            d[i * w + j] = diag.max(d[(i - 1) * w + j]).max(d[i * w + j - 1]);
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if d[i * w + j] == d[(i - 1) * w + j] {
            i -= 1;
        } else if d[i * w + j] == d[i * w + j - 1] {
            j -= 1;
        } else {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        }
    }
    pairs.reverse();
    (d[n * w + m], pairs)
}

fn row_scores(sim: &SlotSim, cols: &[(usize, usize)]) -> Vec<f64> {
    let mut s = vec![0.0; sim.rp * sim.rg];
    for i in 0..sim.rp {
        for j in 0..sim.rg {
            s[i * sim.rg + j] = cols.iter().map(|&(p, q)| sim.at(i, p, j, q)).sum();
        }
    }
    s
}

fn col_scores(sim: &SlotSim, rows: &[(usize, usize)]) -> Vec<f64> {
    let mut s = vec![0.0; sim.cp * sim.cg];
    for p in 0..sim.cp {
        for q in 0..sim.cg {
            s[p * sim.cg + q] = rows.iter().map(|&(i, j)| sim.at(i, p, j, q)).sum();
        }
    }
    s
}

/// Alternates exact row and column alignment until the objective stops
/// improving, starting from `cols`.
fn alternate(sim: &SlotSim, mut cols: Vec<(usize, usize)>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    loop {
        let (_, rows) = align(sim.rp, sim.rg, &row_scores(sim, &cols));
        let (score, next_cols) = align(sim.cp, sim.cg, &col_scores(sim, &rows));
        if score <= best {
            return best;
        }
        best = score;
        cols = next_cols;
    }
}

/// Independent per-axis initial alignments: every pred/gt column pair is
/// scored by the best alignment of their slots, likewise for rows.
fn initial_alignments(sim: &SlotSim) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut cs = vec![0.0; sim.cp * sim.cg];
    for p in 0..sim.cp {
        for q in 0..sim.cg {
            let s: Vec<f64> = (0..sim.rp * sim.rg).map(|k| sim.at(k / sim.rg, p, k % sim.rg, q)).collect();
            cs[p * sim.cg + q] = align(sim.rp, sim.rg, &s).0;
        }
    }
    let mut rs = vec![0.0; sim.rp * sim.rg];
    for i in 0..sim.rp {
        for j in 0..sim.rg {
            let s: Vec<f64> = (0..sim.cp * sim.cg).map(|k| sim.at(i, k / sim.cg, j, k % sim.cg)).collect();
            rs[i * sim.rg + j] = align(sim.cp, sim.cg, &s).0;
        }
    }
    (align(sim.cp, sim.cg, &cs).1, align(sim.rp, sim.rg, &rs).1)
}

fn finish(m: f64, pred: &TopologyGrid, gt: &TopologyGrid) -> f64 {
    (2.0 * m / (pred.len() + gt.len()) as f64).clamp(0.0, 1.0)
}

fn degenerate(pred: &TopologyGrid, gt: &TopologyGrid) -> Option<f64> {
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => Some(1.0),
        (true, false) | (false, true) => Some(0.0),
        _ => None,
    }
}

/// Factored two-stage alignment: alternating row/column DPs to a fixed
/// point, run from both independent initial alignments and from every
/// single column pairing. Polynomial, but a local search: it can fall
/// short of [`grits_top_exact`].
pub fn grits_top_factored(pred: &TopologyGrid, gt: &TopologyGrid) -> f64 {
    if let Some(s) = degenerate(pred, gt) {
        return s;
    }
    let sim = SlotSim::new(pred, gt);
    let (init_cols, init_rows) = initial_alignments(&sim);
    let from_cols = alternate(&sim, init_cols);
    let (_, cols_from_rows) = align(sim.cp, sim.cg, &col_scores(&sim, &init_rows));
    let mut best = from_cols.max(alternate(&sim, cols_from_rows));
    // restarts from every single column pairing escape poor fixed points
    for p in 0..sim.cp {
        for q in 0..sim.cg {
            best = best.max(alternate(&sim, vec![(p, q)]));
        }
    }
    finish(best, pred, gt)
}

/// All strictly increasing index subsequences of `0..n`.
fn subsequences(n: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
        .collect()
}

/// Exact score: enumerates every column alignment, with the optimal row
/// alignment for each found by DP. Exponential in the column count.
pub fn grits_top_exact(pred: &TopologyGrid, gt: &TopologyGrid) -> f64 {
    if let Some(s) = degenerate(pred, gt) {
        return s;
    }
    let sim = SlotSim::new(pred, gt);
    let (sp, sg) = (subsequences(sim.cp), subsequences(sim.cg));
    let mut best: f64 = 0.0;
    for a in &sp {
        for b in sg.iter().filter(|b| b.len() == a.len() && !a.is_empty()) {
            let cols: Vec<_> = a.iter().copied().zip(b.iter().copied()).collect();
            best = best.max(align(sim.rp, sim.rg, &row_scores(&sim, &cols)).0);
        }
    }
    finish(best, pred, gt)
}

/// Grids at most this wide on both sides are scored exactly.
pub const EXACT_MAX_COLS: usize = 4;

/// GriTS_Top: `2·M / (|pred| + |gt|)` with `M` the best total slot IoU over
/// row/column subsequence alignments.
pub fn grits_top(pred: &TopologyGrid, gt: &TopologyGrid) -> f64 {
    if pred.rows.max(gt.rows) <= 4 && pred.cols.max(gt.cols) <= EXACT_MAX_COLS {
        grits_top_exact(pred, gt)
    } else {
        grits_top_factored(pred, gt)
    }
}
