use std::collections::BTreeSet;

use crate::structure::TableStructure;

/// Grid footprint `(row, col, rowspan, colspan)` of a logical cell.
pub type Footprint = (usize, usize, usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// `(left/top cell, right/bottom cell, direction)`.
pub type Relation = (Footprint, Footprint, Direction);

/// Adjacent cell pairs: distinct owners of neighbouring slots across a
/// column boundary (horizontal) or a row boundary (vertical).
pub fn adjacency_set(t: &TableStructure) -> BTreeSet<Relation> {
    let (rows, cols) = (t.rows, t.cols);
    let mut owner: Vec<Option<Footprint>> = vec![None; rows * cols];
    for c in &t.cells {
        let f = (c.row, c.col, c.rowspan, c.colspan);
        for r in c.row..(c.row + c.rowspan).min(rows) {
            for k in c.col..(c.col + c.colspan).min(cols) {
                owner[r * cols + k] = Some(f);
            }
        }
    }
    let mut out = BTreeSet::new();
    for r in 0..rows {
        for k in 0..cols {
            let Some(a) = owner[r * cols + k] else { continue };
            if k + 1 < cols {
                if let Some(b) = owner[r * cols + k + 1] {
                    if a != b {
                        out.insert((a, b, Direction::Horizontal));
                    }
                }
            }
            if r + 1 < rows {
                if let Some(b) = owner[(r + 1) * cols + k] {
                    if a != b {
                        out.insert((a, b, Direction::Vertical));
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 over exact relation matches. Two relation-free
/// tables score 1 when they have the same cell count, else 0.
pub fn car_f1(pred: &TableStructure, gt: &TableStructure) -> CarScore {
    score_sets(&adjacency_set(pred), &adjacency_set(gt), pred.cells.len() == gt.cells.len())
}

pub(crate) fn score_sets(pred: &BTreeSet<Relation>, gt: &BTreeSet<Relation>, same_cells: bool) -> CarScore {
    if pred.is_empty() && gt.is_empty() {
        let v = if same_cells { 1.0 } else { 0.0 };
        return CarScore {
            precision: v,
            recall: v,
            f1: v,
        };
    }
    let tp = pred.intersection(gt).count() as f64;
    let ratio = |n: usize| if n == 0 { 0.0 } else { tp / n as f64 };
    let (precision, recall) = (ratio(pred.len()), ratio(gt.len()));
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    CarScore { precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_top_row_case() {
        let gt = TableStructure::from_anchors(2, 2, 0, &[(0, 0, 1, 1), (0, 1, 1, 1), (1, 0, 1, 1), (1, 1, 1, 1)]).unwrap();
        let pred = TableStructure::from_anchors(2, 2, 0, &[(0, 0, 1, 2), (1, 0, 1, 1), (1, 1, 1, 1)]).unwrap();
        assert_eq!(adjacency_set(&gt).len(), 4);
        assert_eq!(adjacency_set(&pred).len(), 3);
        let s = car_f1(&pred, &gt);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.recall, 0.25);
        assert!((s.f1 - 2.0 / 7.0).abs() < 1e-15);
        assert_eq!(car_f1(&gt, &gt), CarScore { precision: 1.0, recall: 1.0, f1: 1.0 });
    }

    #[test]
    fn empty_prediction() {
        let gt = TableStructure::from_anchors(1, 2, 0, &[(0, 0, 1, 1), (0, 1, 1, 1)]).unwrap();
        let s = car_f1(&TableStructure::empty(), &gt);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let single = TableStructure::from_anchors(1, 1, 0, &[(0, 0, 1, 1)]).unwrap();
        assert_eq!(car_f1(&TableStructure::empty(), &single).f1, 0.0);
        assert_eq!(car_f1(&single, &single).f1, 1.0);
    }
}
