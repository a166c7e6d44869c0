//! Table trees, ordered tree edit distance and TEDS.

use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Tag(&'static str),
    Cell { rowspan: usize, colspan: usize, text: Vec<char> },
}

/// Ordered labelled tree mirroring the markup DOM.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableTree {
    pub label: Label,
    pub children: Vec<TableTree>,
}

impl TableTree {
    fn tag(t: &'static str, children: Vec<TableTree>) -> Self {
        TableTree { label: Label::Tag(t), children }
    }

    /// `table -> [thead] tbody -> tr -> td`. Header cells are plain `td`
    /// nodes inside `thead`; with `keep_text` false every text is empty.
    pub fn from_table(t: &Table, keep_text: bool) -> Self {
        let h = t.header_rows();
        let row = |r: usize| {
            let cells = t
                .row_cells(r)
                .map(|c| TableTree {
                    label: Label::Cell {
                        rowspan: c.rowspan,
                        colspan: c.colspan,
                        text: if keep_text { c.text.chars().collect() } else { Vec::new() },
                    },
                    children: Vec::new(),
                })
                .collect();
            TableTree::tag("tr", cells)
        };
        let mut sections = Vec::new();
        if h > 0 {
            sections.push(TableTree::tag("thead", (0..h).map(row).collect()));
        }
        sections.push(TableTree::tag("tbody", (h..t.rows()).map(row).collect()));
        TableTree::tag("table", sections)
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TableTree::size).sum::<usize>()
    }
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Substitution cost: 0/1 for structure, normalized edit distance between
/// texts of cells with equal spans.
pub fn rename_cost(a: &Label, b: &Label) -> f64 {
    match (a, b) {
        (Label::Tag(x), Label::Tag(y)) => f64::from(u8::from(x != y)),
        (Label::Cell { rowspan: r1, colspan: c1, text: t1 }, Label::Cell { rowspan: r2, colspan: c2, text: t2 }) => {
            if r1 != r2 || c1 != c2 {
                1.0
            } else if t1.is_empty() && t2.is_empty() {
                0.0
            } else {
                levenshtein(t1, t2) as f64 / t1.len().max(t2.len()) as f64
            }
        }
        _ => 1.0,
    }
}

/// Postorder arrays used by the dynamic program.
struct Flat<'a> {
    labels: Vec<&'a Label>,
    /// Postorder index of each node's leftmost leaf.
    lml: Vec<usize>,
    keyroots: Vec<usize>,
}

fn flatten(t: &TableTree) -> Flat<'_> {
    fn walk<'a>(t: &'a TableTree, labels: &mut Vec<&'a Label>, lml: &mut Vec<usize>) -> usize {
        let mut first = None;
        for c in &t.children {
            let l = walk(c, labels, lml);
            first.get_or_insert(l);
        }
        let me = labels.len();
        labels.push(&t.label);
        lml.push(first.unwrap_or(me));
        lml[me]
    }
    let (mut labels, mut lml) = (Vec::new(), Vec::new());
    walk(t, &mut labels, &mut lml);
    // Keyroots: for each distinct leftmost leaf, the highest node having it.
    let n = labels.len();
    let mut keyroots: Vec<usize> = (0..n).filter(|&i| !(i + 1..n).any(|j| lml[j] == lml[i])).collect();
    keyroots.sort_unstable();
    Flat { labels, lml, keyroots }
}

/// Zhang-Shasha ordered tree edit distance with unit insert/delete costs
/// and [`rename_cost`] substitutions.
pub fn tree_edit_distance(a: &TableTree, b: &TableTree) -> f64 {
    let (fa, fb) = (flatten(a), flatten(b));
    let (n, m) = (fa.labels.len(), fb.labels.len());
    let mut td = vec![vec![0.0f64; m]; n];
    let mut fd = vec![vec![0.0f64; m + 1]; n + 1];
    for &i in &fa.keyroots {
        for &j in &fb.keyroots {
            let (li, lj) = (fa.lml[i], fb.lml[j]);
            // fd[x][y]: forest a[li..li+x) vs b[lj..lj+y).
            fd[0][0] = 0.0;
            for x in 1..=i - li + 1 {
                fd[x][0] = fd[x - 1][0] + 1.0;
            }
            for y in 1..=j - lj + 1 {
                fd[0][y] = fd[0][y - 1] + 1.0;
            }
            for x in 1..=i - li + 1 {
                let ia = li + x - 1;
                for y in 1..=j - lj + 1 {
                    let jb = lj + y - 1;
                    let del = fd[x - 1][y] + 1.0;
                    let ins = fd[x][y - 1] + 1.0;
                    if fa.lml[ia] == li && fb.lml[jb] == lj {
                        let sub = fd[x - 1][y - 1] + rename_cost(fa.labels[ia], fb.labels[jb]);
                        fd[x][y] = del.min(ins).min(sub);
                        td[ia][jb] = fd[x][y];
                    } else {
                        let (px, py) = (fa.lml[ia] - li, fb.lml[jb] - lj);
                        fd[x][y] = del.min(ins).min(fd[px][py] + td[ia][jb]);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}

/// `1 - TED / max(|T_p|, |T_g|)`.
pub fn teds(pred: &Table, gold: &Table) -> f64 {
    teds_trees(&TableTree::from_table(pred, true), &TableTree::from_table(gold, true))
}

/// TEDS with all cell texts blanked; spans stay part of the labels.
pub fn s_teds(pred: &Table, gold: &Table) -> f64 {
    teds_trees(&TableTree::from_table(pred, false), &TableTree::from_table(gold, false))
}

pub fn teds_trees(a: &TableTree, b: &TableTree) -> f64 {
    let denom = a.size().max(b.size()) as f64;
    (1.0 - tree_edit_distance(a, b) / denom).clamp(0.0, 1.0)
}
