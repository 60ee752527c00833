use crate::structure::{HtmlNode, HtmlTree, NodeKind};

/// Post-order flattening with leftmost-leaf indices.
struct Flat {
    labels: Vec<NodeKind>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl Flat {
    fn new(root: &HtmlNode) -> Self {
        let mut f = Flat {
            labels: Vec::new(),
            leftmost: Vec::new(),
            keyroots: Vec::new(),
        };
        f.visit(root);
        // keyroots: the highest node for each distinct leftmost leaf
        let n = f.labels.len();
        let mut seen = vec![false; n];
        for i in (0..n).rev() {
            if !seen[f.leftmost[i]] {
                seen[f.leftmost[i]] = true;
                f.keyroots.push(i);
            }
        }
        f.keyroots.sort_unstable();
        f
    }

    fn visit(&mut self, node: &HtmlNode) -> usize {
        let mut first = None;
        for child in &node.children {
            let l = self.visit(child);
            first.get_or_insert(l);
        }
        let idx = self.labels.len();
        self.labels.push(node.kind);
        self.leftmost.push(first.unwrap_or(idx));
        self.leftmost[idx]
    }
}

/// Ordered tree edit distance with unit insert/delete/relabel costs
/// (Zhang-Shasha). Nodes match when label and span attributes agree.
pub fn tree_edit_distance(a: &HtmlNode, b: &HtmlNode) -> usize {
    let fa = Flat::new(a);
    let fb = Flat::new(b);
    let (na, nb) = (fa.labels.len(), fb.labels.len());
    let mut td = vec![vec![0usize; nb]; na];
    let mut fd = vec![vec![0usize; nb + 1]; na + 1];
    for &i in &fa.keyroots {
        for &j in &fb.keyroots {
            let (li, lj) = (fa.leftmost[i], fb.leftmost[j]);
            // fd indices are offsets from li-1 / lj-1
            let (m, n) = (i - li + 1, j - lj + 1);
            fd[0][0] = 0;
            for x in 1..=m {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..=n {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..=m {
                for y in 1..=n {
                    let (ii, jj) = (li + x - 1, lj + y - 1);
                    let del = fd[x - 1][y] + 1;
                    let ins = fd[x][y - 1] + 1;
                    if fa.leftmost[ii] == li && fb.leftmost[jj] == lj {
                        let rel = fd[x - 1][y - 1] + usize::from(fa.labels[ii] != fb.labels[jj]);
                        fd[x][y] = del.min(ins).min(rel);
                        td[ii][jj] = fd[x][y];
                    } else {
                        let px = fa.leftmost[ii] - li;
                        let py = fb.leftmost[jj] - lj;
                        fd[x][y] = del.min(ins).min(fd[px][py] + td[ii][jj]);
                    }
                }
            }
        }
    }
    td[na - 1][nb - 1]
}

/// Structure-only TEDS: `1 − TED / max(|pred|, |gt|)`.
pub fn s_teds(pred: &HtmlTree, gt: &HtmlTree) -> f64 {
    let d = tree_edit_distance(&pred.root, &gt.root);
    let n = pred.size().max(gt.size());
    1.0 - d as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn td() -> HtmlNode {
        HtmlNode::leaf(NodeKind::Td { rowspan: 1, colspan: 1 })
    }

    fn tree(root: HtmlNode) -> HtmlTree {
        HtmlTree { root }
    }

    #[test]
    fn insertion_case() {
        let a = tree(HtmlNode::new(NodeKind::Table, vec![HtmlNode::new(NodeKind::Tr, vec![td()])]));
        let b = tree(HtmlNode::new(NodeKind::Table, vec![HtmlNode::new(NodeKind::Tr, vec![td(), td()])]));
        assert_eq!(s_teds(&a, &b), 0.75);
        assert_eq!(s_teds(&a, &a), 1.0);
    }

    #[test]
    fn bare_table() {
        let a = tree(HtmlNode::leaf(NodeKind::Table));
        let b = tree(HtmlNode::new(NodeKind::Table, vec![HtmlNode::new(NodeKind::Tr, vec![td()])]));
        assert!((s_teds(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn span_attributes_count_as_relabel() {
        let a = tree(HtmlNode::new(NodeKind::Table, vec![HtmlNode::new(NodeKind::Tr, vec![td()])]));
        let b = tree(HtmlNode::new(
            NodeKind::Table,
            vec![HtmlNode::new(NodeKind::Tr, vec![HtmlNode::leaf(NodeKind::Td { rowspan: 1, colspan: 2 })])],
        ));
        assert_eq!(tree_edit_distance(&a.root, &b.root), 1);
    }
}
