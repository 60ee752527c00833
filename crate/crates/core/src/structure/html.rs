use super::{LogicalCell, TableStructure};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Table,
    Thead,
    Tbody,
    Tr,
    Td { rowspan: usize, colspan: usize },
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Table => "table",
            NodeKind::Thead => "thead",
            NodeKind::Tbody => "tbody",
            NodeKind::Tr => "tr",
            NodeKind::Td { .. } => "td",
        }
    }
}

/// Ordered tree node. `offset` is the byte position of the opening tag in
/// the parsed source (0 for constructed trees) and is ignored by equality.
#[derive(Clone, Debug)]
pub struct HtmlNode {
    pub kind: NodeKind,
    pub children: Vec<HtmlNode>,
    pub offset: usize,
}

impl PartialEq for HtmlNode {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.children == other.children
    }
}

impl HtmlNode {
    pub fn new(kind: NodeKind, children: Vec<HtmlNode>) -> Self {
        HtmlNode { kind, children, offset: 0 }
    }

    pub fn leaf(kind: NodeKind) -> Self {
        Self::new(kind, Vec::new())
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(HtmlNode::size).sum::<usize>()
    }
}

/// Structure-only HTML tree rooted at `table`.
#[derive(Clone, Debug, PartialEq)]
pub struct HtmlTree {
    pub root: HtmlNode,
}

impl HtmlTree {
    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Canonical tree of a structure, matching [`to_html`](super::to_html).
    pub fn from_structure(t: &TableStructure) -> Self {
        let mut rows: Vec<HtmlNode> = (0..t.rows).map(|_| HtmlNode::leaf(NodeKind::Tr)).collect();
        for c in &t.cells {
            rows[c.row].children.push(HtmlNode::leaf(NodeKind::Td {
                rowspan: c.rowspan,
                colspan: c.colspan,
            }));
        }
        let body = rows.split_off(t.header_rows);
        let mut sections = Vec::new();
        if t.header_rows > 0 {
            sections.push(HtmlNode::new(NodeKind::Thead, rows));
        }
        sections.push(HtmlNode::new(NodeKind::Tbody, body));
        HtmlTree {
            root: HtmlNode::new(NodeKind::Table, sections),
        }
    }
}

#[derive(Debug)]
enum Token {
    Open {
        name: String,
        attrs: Vec<(String, String)>,
        offset: usize,
    },
    Close {
        name: String,
        offset: usize,
    },
    Text {
        offset: usize,
        blank: bool,
    },
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        if b[i] != b'<' {
            let start = i;
            while i < b.len() && b[i] != b'<' {
                i += 1;
            }
            let blank = src[start..i].trim().is_empty();
            out.push(Token::Text { offset: start, blank });
            continue;
        }
        let start = i;
        if src[i..].starts_with("<!--") {
            let end = src[i..].find("-->").ok_or_else(|| parse_err(start, "unterminated comment"))?;
            i += end + 3;
            continue;
        }
        if src[i..].starts_with("<!") || src[i..].starts_with("<?") {
            let end = src[i..].find('>').ok_or_else(|| parse_err(start, "unterminated declaration"))?;
            i += end + 1;
            continue;
        }
        i += 1;
        let closing = i < b.len() && b[i] == b'/';
        if closing {
            i += 1;
        }
        let name_start = i;
        while i < b.len() && b[i].is_ascii_alphanumeric() {
            i += 1;
        }
        if i == name_start {
            return Err(parse_err(start, "expected tag name"));
        }
        let name = src[name_start..i].to_ascii_lowercase();
        let mut attrs = Vec::new();
        loop {
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= b.len() {
                return Err(parse_err(start, "unterminated tag"));
            }
            if b[i] == b'>' {
                i += 1;
                break;
            }
            if b[i] == b'/' && i + 1 < b.len() && b[i + 1] == b'>' {
                i += 2;
                break;
            }
            if closing {
                return Err(parse_err(i, "attributes on closing tag"));
            }
            let an_start = i;
            while i < b.len() && !b[i].is_ascii_whitespace() && !matches!(b[i], b'=' | b'>' | b'/') {
                i += 1;
            }
            if i == an_start {
                return Err(parse_err(i, "malformed attribute"));
            }
            let an = src[an_start..i].to_ascii_lowercase();
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            let mut value = String::new();
            if i < b.len() && b[i] == b'=' {
                i += 1;
                while i < b.len() && b[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'"' || b[i] == b'\'') {
                    let q = b[i];
                    i += 1;
                    let v_start = i;
                    while i < b.len() && b[i] != q {
                        i += 1;
                    }
                    if i >= b.len() {
                        return Err(parse_err(v_start - 1, "unterminated attribute value"));
                    }
                    value = src[v_start..i].to_string();
                    i += 1;
                } else {
                    let v_start = i;
                    while i < b.len() && !b[i].is_ascii_whitespace() && b[i] != b'>' {
                        i += 1;
                    }
                    value = src[v_start..i].to_string();
                }
            }
            attrs.push((an, value));
        }
        out.push(if closing {
            Token::Close { name, offset: start }
        } else {
            Token::Open { name, attrs, offset: start }
        });
    }
    Ok(out)
}

const STRUCTURAL: [&str; 7] = ["table", "thead", "tbody", "tfoot", "tr", "td", "th"];

struct TreeBuilder {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl TreeBuilder {
    fn next(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    /// Skips blank text; errors on visible text outside cells.
    fn skip_blank(&mut self) -> Result<()> {
        while let Some(Token::Text { offset, blank }) = self.tokens.get(self.pos) {
            if !blank {
                return Err(parse_err(*offset, "text outside a cell"));
            }
            self.pos += 1;
        }
        Ok(())
    }

    fn table(&mut self) -> Result<HtmlNode> {
        self.skip_blank()?;
        let offset = match self.next() {
            Some(Token::Open { name, offset, .. }) if name == "table" => *offset,
            Some(Token::Open { offset, .. } | Token::Close { offset, .. } | Token::Text { offset, .. }) => {
                return Err(parse_err(*offset, "expected <table>"))
            }
            None => return Err(parse_err(self.end, "no table element")),
        };
        let mut children = Vec::new();
        loop {
            self.skip_blank()?;
            match self.next() {
                Some(Token::Open { name, offset, .. }) => {
                    let (name, offset) = (name.clone(), *offset);
                    match name.as_str() {
                        "thead" => children.push(self.section(NodeKind::Thead, "thead", offset)?),
                        "tbody" => children.push(self.section(NodeKind::Tbody, "tbody", offset)?),
                        "tr" => children.push(self.row(offset)?),
                        other => return Err(parse_err(offset, format!("unexpected <{other}> in table"))),
                    }
                }
                Some(Token::Close { name, offset }) => {
                    if name == "table" {
                        break;
                    }
                    return Err(parse_err(*offset, format!("unexpected </{name}> in table")));
                }
                Some(Token::Text { .. }) => unreachable!("skipped"),
                None => return Err(parse_err(self.end, "unclosed <table>")),
            }
        }
        self.skip_blank()?;
        if let Some(Token::Open { offset, .. } | Token::Close { offset, .. } | Token::Text { offset, .. }) =
            self.tokens.get(self.pos)
        {
            return Err(parse_err(*offset, "content after </table>"));
        }
        Ok(HtmlNode {
            kind: NodeKind::Table,
            children,
            offset,
        })
    }

    fn section(&mut self, kind: NodeKind, tag: &str, offset: usize) -> Result<HtmlNode> {
        let mut rows = Vec::new();
        loop {
            self.skip_blank()?;
            match self.next() {
                Some(Token::Open { name, offset, .. }) if name == "tr" => {
                    let o = *offset;
                    rows.push(self.row(o)?);
                }
                Some(Token::Open { name, offset, .. }) => {
                    return Err(parse_err(*offset, format!("unexpected <{name}> in <{tag}>")))
                }
                Some(Token::Close { name, offset }) => {
                    if name == tag {
                        break;
                    }
                    return Err(parse_err(*offset, format!("unexpected </{name}> in <{tag}>")));
                }
                Some(Token::Text { .. }) => unreachable!("skipped"),
                None => return Err(parse_err(self.end, format!("unclosed <{tag}>"))),
            }
        }
        Ok(HtmlNode {
            kind,
            children: rows,
            offset,
        })
    }

    fn row(&mut self, offset: usize) -> Result<HtmlNode> {
        let mut cells = Vec::new();
        loop {
            self.skip_blank()?;
            match self.next() {
                Some(Token::Open { name, attrs, offset }) if name == "td" || name == "th" => {
                    let (tag, o) = (name.clone(), *offset);
                    let mut rowspan = 1;
                    let mut colspan = 1;
                    for (k, v) in attrs {
                        let slot = match k.as_str() {
                            "rowspan" => &mut rowspan,
                            "colspan" => &mut colspan,
                            _ => continue,
                        };
                        *slot = v
                            .trim()
                            .parse::<usize>()
                            .ok()
                            .filter(|&n| n >= 1)
                            .ok_or_else(|| parse_err(o, format!("invalid {k}={v:?}")))?;
                    }
                    self.cell_content(&tag)?;
                    cells.push(HtmlNode {
                        kind: NodeKind::Td { rowspan, colspan },
                        children: Vec::new(),
                        offset: o,
                    });
                }
                Some(Token::Open { name, offset, .. }) => {
                    return Err(parse_err(*offset, format!("unexpected <{name}> in <tr>")))
                }
                Some(Token::Close { name, offset }) => {
                    if name == "tr" {
                        break;
                    }
                    return Err(parse_err(*offset, format!("unexpected </{name}> in <tr>")));
                }
                Some(Token::Text { .. }) => unreachable!("skipped"),
                None => return Err(parse_err(self.end, "unclosed <tr>")),
            }
        }
        Ok(HtmlNode {
            kind: NodeKind::Tr,
            children: cells,
            offset,
        })
    }

    /// Discards cell content (text and inline markup) up to the closing tag.
    fn cell_content(&mut self, tag: &str) -> Result<()> {
        loop {
            match self.next() {
                Some(Token::Text { .. }) => {}
                Some(Token::Open { name, offset, .. }) => {
                    if STRUCTURAL.contains(&name.as_str()) {
                        return Err(parse_err(*offset, format!("<{name}> inside a cell")));
                    }
                }
                Some(Token::Close { name, offset }) => {
                    if name == tag {
                        return Ok(());
                    }
                    if STRUCTURAL.contains(&name.as_str()) {
                        return Err(parse_err(*offset, format!("unexpected </{name}> inside <{tag}>")));
                    }
                }
                None => return Err(parse_err(self.end, format!("unclosed <{tag}>"))),
            }
        }
    }
}

/// Parses one `<table>` into a structure tree; `th` becomes `td`, cell
/// content is discarded.
pub fn parse_html_tree(html: &str) -> Result<HtmlTree> {
    let tokens = tokenize(html)?;
    let mut b = TreeBuilder {
        tokens,
        pos: 0,
        end: html.len(),
    };
    Ok(HtmlTree { root: b.table()? })
}

/// Parses HTML into a tiling structure using the occupancy algorithm.
/// Rows inside `thead` count as header rows and must come first.
pub fn parse_html_structure(html: &str) -> Result<TableStructure> {
    let tree = parse_html_tree(html)?;
    let mut rows: Vec<&HtmlNode> = Vec::new();
    let mut header_rows = 0;
    for section in &tree.root.children {
        match section.kind {
            NodeKind::Thead => {
                if rows.len() != header_rows {
                    return Err(parse_err(section.offset, "<thead> after body rows"));
                }
                header_rows += section.children.len();
                rows.extend(section.children.iter());
            }
            NodeKind::Tbody => rows.extend(section.children.iter()),
            NodeKind::Tr => rows.push(section),
            _ => unreachable!("tree builder only nests sections and rows in a table"),
        }
    }
    let n_rows = rows.len();
    if n_rows == 0 {
        return Ok(TableStructure::empty());
    }
    let mut occupied: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut cells = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let mut c = 0;
        for td in &row.children {
            let NodeKind::Td { rowspan, colspan } = td.kind else {
                unreachable!("rows only hold cells")
            };
            while occupied[r].get(c).copied().unwrap_or(false) {
                c += 1;
            }
            if r + rowspan > n_rows {
                return Err(parse_err(td.offset, format!("rowspan {rowspan} runs past the last row")));
            }
            for occ in occupied.iter_mut().skip(r).take(rowspan) {
                if occ.len() < c + colspan {
                    occ.resize(c + colspan, false);
                }
                if occ[c..c + colspan].iter().any(|&x| x) {
                    return Err(parse_err(td.offset, "cell overlaps an occupied slot"));
                }
                occ[c..c + colspan].fill(true);
            }
            cells.push(LogicalCell {
                row: r,
                col: c,
                rowspan,
                colspan,
                header: r < header_rows,
            });
            c += colspan;
        }
    }
    let n_cols = occupied.iter().map(Vec::len).max().unwrap_or(0);
    if n_cols == 0 {
        return Err(parse_err(rows[0].offset, "table rows contain no cells"));
    }
    for (r, occ) in occupied.iter().enumerate() {
        if occ.len() < n_cols || occ.iter().any(|&x| !x) {
            return Err(parse_err(rows[r].offset, format!("row {r} is ragged")));
        }
    }
    cells.sort_by_key(|c| (c.row, c.col));
    Ok(TableStructure {
        rows: n_rows,
        cols: n_cols,
        header_rows,
        cells,
        geometry: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::to_html;

    #[test]
    fn rowspan_without_wrappers() {
        let t = parse_html_structure("<table><tr><td rowspan=\"2\"></td><td></td></tr><tr><td></td></tr></table>").unwrap();
        assert_eq!((t.rows, t.cols, t.header_rows), (2, 2, 0));
        assert_eq!(t.cells[0].rowspan, 2);
        assert_eq!((t.cells[2].row, t.cells[2].col), (1, 1));
    }

    #[test]
    fn ragged_rejected() {
        let e = parse_html_structure("<table><tr><td></td></tr><tr><td></td><td></td></tr></table>").unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 7, .. }), "{e}");
    }

    #[test]
    fn text_and_th_normalised() {
        let t = parse_html_structure(
            "<table>\n <thead><tr><th>Name <b>x</b></th><th>Qty</th></tr></thead>\n <tbody><tr><td>a</td><td>1<br></td></tr></tbody></table>\n",
        )
        .unwrap();
        let canonical = "<table><thead><tr><td></td><td></td></tr></thead><tbody><tr><td></td><td></td></tr></tbody></table>";
        assert_eq!(to_html(&t), canonical);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        for (src, offset) in [
            ("<table><tr><td></tr></table>", 15),
            ("<table><tr><td></td></tr>", 25),
            ("<table><tr><td rowspan=\"2\"></td></tr></table>", 11),
            ("<table><tr><td rowspan=\"0\"></td></tr></table>", 11),
            ("<table><tr>x<td></td></tr></table>", 11),
            ("<div></div>", 0),
            ("<table></table><table></table>", 15),
        ] {
            match parse_html_structure(src) {
                Err(Error::Parse { offset: o, .. }) => assert_eq!(o, offset, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn overlap_rejected() {
        // the second row's colspan runs into the rowspan from above
        let src = "<table><tr><td></td><td rowspan=\"2\"></td></tr><tr><td colspan=\"2\"></td></tr></table>";
        assert!(parse_html_structure(src).is_err());
    }

    #[test]
    fn empty_table() {
        assert_eq!(parse_html_structure("<table></table>").unwrap(), TableStructure::empty());
        assert_eq!(parse_html_tree("<table></table>").unwrap().size(), 1);
    }

    #[test]
    fn tree_matches_structure_tree() {
        let t = TableStructure::from_anchors(2, 2, 1, &[(0, 0, 1, 2), (1, 0, 1, 1), (1, 1, 1, 1)]).unwrap();
        let parsed = parse_html_tree(&to_html(&t)).unwrap();
        assert_eq!(parsed, HtmlTree::from_structure(&t));
        assert_eq!(parsed.size(), 1 + 2 + 2 + 3);
    }
}
