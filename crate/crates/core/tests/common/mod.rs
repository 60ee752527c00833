//! Random fixtures and brute-force oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use fasttab_core::structure::{HtmlNode, NodeKind};
use fasttab_core::{Rng, TableStructure};

/// Random tiling: row-major scan, each free slot becomes an anchor with
/// random spans cut back to the free region.
pub fn random_structure(rng: &mut Rng, max_rows: usize, max_cols: usize, max_span: usize) -> TableStructure {
    let rows = rng.int_range(1, max_rows);
    let cols = rng.int_range(1, max_cols);
    let mut taken = vec![vec![false; cols]; rows];
    let mut anchors = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if taken[r][c] {
                continue;
            }
            let want_rs = if rng.bernoulli(0.3) { rng.int_range(1, max_span) } else { 1 };
            let want_cs = if rng.bernoulli(0.3) { rng.int_range(1, max_span) } else { 1 };
            let mut cs = 1;
            while cs < want_cs && c + cs < cols && !taken[r][c + cs] {
                cs += 1;
            }
            let mut rs = 1;
            while rs < want_rs && r + rs < rows && (c..c + cs).all(|k| !taken[r + rs][k]) {
                rs += 1;
            }
            for row in taken.iter_mut().skip(r).take(rs) {
                for slot in row.iter_mut().skip(c).take(cs) {
                    *slot = true;
                }
            }
            anchors.push((r, c, rs, cs));
        }
    }
    let header = rng.int_range(0, rows);
    TableStructure::from_anchors(rows, cols, header.min(rows), &anchors).unwrap()
}

fn random_kind(rng: &mut Rng) -> NodeKind {
    match rng.int_range(0, 5) {
        0 => NodeKind::Table,
        1 => NodeKind::Thead,
        2 => NodeKind::Tbody,
        3 => NodeKind::Tr,
        _ => NodeKind::Td {
            rowspan: rng.int_range(1, 2),
            colspan: rng.int_range(1, 2),
        },
    }
}

/// Random ordered labelled tree with exactly `n` nodes.
pub fn random_tree(rng: &mut Rng, n: usize) -> HtmlNode {
    let mut root = HtmlNode::leaf(random_kind(rng));
    for _ in 1..n {
        let size = root.size();
        let target = rng.int_range(0, size - 1);
        let kind = random_kind(rng);
        insert_at(&mut root, target, kind, rng);
    }
    root
}

fn insert_at(node: &mut HtmlNode, mut target: usize, kind: NodeKind, rng: &mut Rng) -> usize {
    if target == 0 {
        let pos = rng.int_range(0, node.children.len());
        node.children.insert(pos, HtmlNode::leaf(kind));
        return usize::MAX;
    }
    target -= 1;
    for child in node.children.iter_mut() {
        let s = child.size();
        if target < s {
            insert_at(child, target, kind, rng);
            return usize::MAX;
        }
        target -= s;
    }
    target
}

/// Forest edit distance by the textbook recursion on rightmost roots,
/// memoised on forest identity.
pub fn oracle_ted(a: &HtmlNode, b: &HtmlNode) -> usize {
    fn flatten<'t>(n: &'t HtmlNode, out: &mut Vec<&'t HtmlNode>) -> usize {
        let id = out.len();
        out.push(n);
        for c in &n.children {
            flatten(c, out);
        }
        id
    }
    let mut na = Vec::new();
    flatten(a, &mut na);
    let mut nb = Vec::new();
    flatten(b, &mut nb);
    let ids = |nodes: &[&HtmlNode]| -> HashMap<*const HtmlNode, usize> {
        nodes.iter().enumerate().map(|(i, n)| (*n as *const _, i)).collect()
    };
    let (ia, ib) = (ids(&na), ids(&nb));

    struct Ctx<'t> {
        na: Vec<&'t HtmlNode>,
        nb: Vec<&'t HtmlNode>,
        ia: HashMap<*const HtmlNode, usize>,
        ib: HashMap<*const HtmlNode, usize>,
        memo: HashMap<(Vec<usize>, Vec<usize>), usize>,
    }
    fn forest_size(nodes: &[&HtmlNode], f: &[usize]) -> usize {
        f.iter().map(|&i| nodes[i].size()).sum()
    }
    fn dist(ctx: &mut Ctx<'_>, f: Vec<usize>, g: Vec<usize>) -> usize {
        if f.is_empty() {
            return forest_size(&ctx.nb, &g);
        }
        if g.is_empty() {
            return forest_size(&ctx.na, &f);
        }
        if let Some(&d) = ctx.memo.get(&(f.clone(), g.clone())) {
            return d;
        }
        let v = *f.last().unwrap();
        let w = *g.last().unwrap();
        let v_children: Vec<usize> = ctx.na[v].children.iter().map(|c| ctx.ia[&(c as *const _)]).collect();
        let w_children: Vec<usize> = ctx.nb[w].children.iter().map(|c| ctx.ib[&(c as *const _)]).collect();
        let mut f_minus_v = f[..f.len() - 1].to_vec();
        f_minus_v.extend(&v_children);
        let mut g_minus_w = g[..g.len() - 1].to_vec();
        g_minus_w.extend(&w_children);
        let relabel = usize::from(ctx.na[v].kind != ctx.nb[w].kind);
        let d1 = dist(ctx, f_minus_v, g.clone()) + 1;
        let d2 = dist(ctx, f.clone(), g_minus_w) + 1;
        let d3 = dist(ctx, v_children, w_children)
            + dist(ctx, f[..f.len() - 1].to_vec(), g[..g.len() - 1].to_vec())
            + relabel;
        let d = d1.min(d2).min(d3);
        ctx.memo.insert((f, g), d);
        d
    }
    let mut ctx = Ctx {
        na,
        nb,
        ia,
        ib,
        memo: HashMap::new(),
    };
    dist(&mut ctx, vec![0], vec![0])
}

/// Slot box relative to its slot, exclusive ends.
fn rel_box(t: &TableStructure, r: usize, c: usize) -> [i64; 4] {
    let cell = t
        .cells
        .iter()
        .find(|x| r >= x.row && r < x.row + x.rowspan && c >= x.col && c < x.col + x.colspan)
        .unwrap();
    [
        cell.row as i64 - r as i64,
        cell.col as i64 - c as i64,
        (cell.row + cell.rowspan) as i64 - r as i64,
        (cell.col + cell.colspan) as i64 - c as i64,
    ]
}

fn iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let ih = (a[2].min(b[2]) - a[0].max(b[0])).max(0);
    let iw = (a[3].min(b[3]) - a[1].max(b[1])).max(0);
    let inter = (ih * iw) as f64;
    let area_a = ((a[2] - a[0]) * (a[3] - a[1])) as f64;
    let area_b = ((b[2] - b[0]) * (b[3] - b[1])) as f64;
    inter / (area_a + area_b - inter)
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect()).collect()
}

/// GriTS_Top by enumerating every row and every column alignment.
pub fn oracle_grits(pred: &TableStructure, gt: &TableStructure) -> f64 {
    let sim: Vec<Vec<Vec<Vec<f64>>>> = (0..pred.rows)
        .map(|i| {
            (0..pred.cols)
                .map(|p| {
                    let a = rel_box(pred, i, p);
                    (0..gt.rows)
                        .map(|j| (0..gt.cols).map(|q| iou(a, rel_box(gt, j, q))).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let (rp, rg, cp, cg) = (subsets(pred.rows), subsets(gt.rows), subsets(pred.cols), subsets(gt.cols));
    let mut best: f64 = 0.0;
    for ra in &rp {
        for rb in rg.iter().filter(|x| x.len() == ra.len()) {
            for ca in &cp {
                for cb in cg.iter().filter(|x| x.len() == ca.len()) {
                    let mut s = 0.0;
                    for (&i, &j) in ra.iter().zip(rb) {
                        for (&p, &q) in ca.iter().zip(cb) {
                            s += sim[i][p][j][q];
                        }
                    }
                    best = best.max(s);
                }
            }
        }
    }
    2.0 * best / (pred.rows * pred.cols + gt.rows * gt.cols) as f64
}

pub type Rel = ((usize, usize, usize, usize), (usize, usize, usize, usize), bool);

/// Adjacency relations by checking every ordered pair of cells.
pub fn oracle_relations(t: &TableStructure) -> BTreeSet<Rel> {
    let mut out = BTreeSet::new();
    for a in &t.cells {
        for b in &t.cells {
            let fa = (a.row, a.col, a.rowspan, a.colspan);
            let fb = (b.row, b.col, b.rowspan, b.colspan);
            let rows_overlap = a.row < b.row + b.rowspan && b.row < a.row + a.rowspan;
            let cols_overlap = a.col < b.col + b.colspan && b.col < a.col + a.colspan;
            if a.col + a.colspan == b.col && rows_overlap {
                out.insert((fa, fb, true));
            }
            if a.row + a.rowspan == b.row && cols_overlap {
                out.insert((fa, fb, false));
            }
        }
    }
    out
}

/// (precision, recall, f1) from oracle relation sets.
pub fn oracle_car(pred: &TableStructure, gt: &TableStructure) -> (f64, f64, f64) {
    let (p, g) = (oracle_relations(pred), oracle_relations(gt));
    if p.is_empty() && g.is_empty() {
        let v = if pred.cells.len() == gt.cells.len() { 1.0 } else { 0.0 };
        return (v, v, v);
    }
    let tp = p.intersection(&g).count() as f64;
    let prec = if p.is_empty() { 0.0 } else { tp / p.len() as f64 };
    let rec = if g.is_empty() { 0.0 } else { tp / g.len() as f64 };
    let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    (prec, rec, f1)
}
