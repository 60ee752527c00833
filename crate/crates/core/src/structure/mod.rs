//! Logical table structure, canonical HTML emission and parsing.

mod html;

pub use html::{parse_html_structure, parse_html_tree, HtmlNode, HtmlTree, NodeKind};

use serde::{Deserialize, Serialize};

use crate::axial::GridSpec;
use crate::error::{Error, Result};
use crate::grid::{CellRect, SpanGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalCell {
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    pub header: bool,
}

/// Logical cells in row-major anchor order. Equality ignores geometry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableStructure {
    pub rows: usize,
    pub cols: usize,
    pub header_rows: usize,
    pub cells: Vec<LogicalCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Vec<CellRect>>,
}

impl PartialEq for TableStructure {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.header_rows == other.header_rows
            && self.cells == other.cells
    }
}

impl TableStructure {
    /// Table with no rows or cells.
    pub fn empty() -> Self {
        TableStructure {
            rows: 0,
            cols: 0,
            header_rows: 0,
            cells: Vec::new(),
            geometry: None,
        }
    }

    /// Builds a structure from anchors `(r, c, rs, cs)`, sorting them and
    /// checking the tiling.
    pub fn from_anchors(rows: usize, cols: usize, header_rows: usize, anchors: &[(usize, usize, usize, usize)]) -> Result<Self> {
        let spans = SpanGrid::from_anchors(rows, cols, anchors)?;
        if header_rows > rows {
            return Err(Error::Consistency(format!("{header_rows} header rows exceed {rows} rows")));
        }
        Ok(Self::from_span_grid(&spans, header_rows))
    }

    fn from_span_grid(spans: &SpanGrid, header_rows: usize) -> Self {
        let cells = spans
            .anchors()
            .into_iter()
            .map(|(row, col, rowspan, colspan)| LogicalCell {
                row,
                col,
                rowspan,
                colspan,
                header: row < header_rows,
            })
            .collect();
        TableStructure {
            rows: spans.rows,
            cols: spans.cols,
            header_rows,
            cells,
            geometry: None,
        }
    }

    /// Span grid view of the cells.
    pub fn span_grid(&self) -> Result<SpanGrid> {
        let anchors: Vec<_> = self.cells.iter().map(|c| (c.row, c.col, c.rowspan, c.colspan)).collect();
        SpanGrid::from_anchors(self.rows, self.cols, &anchors)
    }

    /// Checks tiling and header flags.
    pub fn validate(&self) -> Result<()> {
        self.span_grid()?;
        if self.header_rows > self.rows {
            return Err(Error::Consistency("header rows exceed rows".into()));
        }
        if let Some(c) = self.cells.iter().find(|c| c.header != (c.row < self.header_rows)) {
            return Err(Error::Consistency(format!("cell ({},{}) has a wrong header flag", c.row, c.col)));
        }
        Ok(())
    }

    /// `true` if any cell spans more than one slot.
    pub fn is_complex(&self) -> bool {
        self.cells.iter().any(|c| c.rowspan > 1 || c.colspan > 1)
    }
}

/// One logical cell per anchor, with geometry taken from the grid.
pub fn build_structure(g: &GridSpec, s: &SpanGrid) -> Result<TableStructure> {
    if g.rows != s.rows || g.cols != s.cols {
        return Err(Error::Consistency(format!(
            "grid is {}x{} but spans are {}x{}",
            g.rows, g.cols, s.rows, s.cols
        )));
    }
    if g.header_rows > g.rows {
        return Err(Error::Consistency("header rows exceed rows".into()));
    }
    let mut t = TableStructure::from_span_grid(s, g.header_rows);
    let geometry = t
        .cells
        .iter()
        .map(|c| CellRect {
            r: c.row,
            c: c.col,
            x0: g.col_bounds[c.col],
            y0: g.row_bounds[c.row],
            x1: g.col_bounds[c.col + c.colspan],
            y1: g.row_bounds[c.row + c.rowspan],
        })
        .collect();
    t.geometry = Some(geometry);
    Ok(t)
}

/// Canonical HTML: `<table>[<thead>…</thead>]<tbody>…</tbody></table>`.
pub fn to_html(t: &TableStructure) -> String {
    let mut out = String::with_capacity(32 + t.cells.len() * 12);
    out.push_str("<table>");
    let mut cells = t.cells.iter().peekable();
    for r in 0..t.rows {
        if r == 0 && t.header_rows > 0 {
            out.push_str("<thead>");
        }
        if r == t.header_rows {
            out.push_str("<tbody>");
        }
        out.push_str("<tr>");
        while let Some(c) = cells.next_if(|c| c.row == r) {
            out.push_str("<td");
            if c.rowspan > 1 {
                out.push_str(&format!(" rowspan=\"{}\"", c.rowspan));
            }
            if c.colspan > 1 {
                out.push_str(&format!(" colspan=\"{}\"", c.colspan));
            }
            out.push_str("></td>");
        }
        out.push_str("</tr>");
        if r + 1 == t.header_rows {
            out.push_str("</thead>");
        }
    }
    if t.header_rows == t.rows {
        out.push_str("<tbody>");
    }
    out.push_str("</tbody></table>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, h: usize) -> GridSpec {
        GridSpec::uniform(rows, cols, h)
    }

    #[test]
    fn single_body_cell() {
        let t = build_structure(&grid(1, 1, 0), &SpanGrid::simple(1, 1)).unwrap();
        assert_eq!(t.cells, vec![LogicalCell { row: 0, col: 0, rowspan: 1, colspan: 1, header: false }]);
        assert_eq!(to_html(&t), "<table><tbody><tr><td></td></tr></tbody></table>");
    }

    #[test]
    fn merged_header() {
        let s = SpanGrid::from_anchors(2, 2, &[(0, 0, 1, 2), (1, 0, 1, 1), (1, 1, 1, 1)]).unwrap();
        let t = build_structure(&grid(2, 2, 1), &s).unwrap();
        assert_eq!(t.cells.len(), 3);
        assert!(t.cells[0].header && t.cells[0].colspan == 2);
        assert!(!t.cells[1].header && !t.cells[2].header);
        assert_eq!(t.geometry.as_ref().unwrap()[0].x1, 1.0);
    }

    #[test]
    fn all_header() {
        let t = build_structure(&grid(2, 2, 2), &SpanGrid::simple(2, 2)).unwrap();
        assert!(t.cells.iter().all(|c| c.header));
        assert_eq!(
            to_html(&t),
            "<table><thead><tr><td></td><td></td></tr><tr><td></td><td></td></tr></thead><tbody></tbody></table>"
        );
    }

    #[test]
    fn mismatched_inputs() {
        assert!(build_structure(&grid(2, 2, 0), &SpanGrid::simple(2, 3)).is_err());
    }

    #[test]
    fn html_rules() {
        let t = build_structure(&grid(2, 1, 1), &SpanGrid::simple(2, 1)).unwrap();
        assert_eq!(
            to_html(&t),
            "<table><thead><tr><td></td></tr></thead><tbody><tr><td></td></tr></tbody></table>"
        );
        let t = TableStructure::from_anchors(1, 2, 0, &[(0, 0, 1, 2)]).unwrap();
        assert_eq!(to_html(&t), "<table><tbody><tr><td colspan=\"2\"></td></tr></tbody></table>");
        let t = TableStructure::from_anchors(2, 2, 0, &[(0, 0, 2, 2)]).unwrap();
        assert_eq!(
            to_html(&t),
            "<table><tbody><tr><td rowspan=\"2\" colspan=\"2\"></td></tr><tr></tr></tbody></table>"
        );
    }
}
