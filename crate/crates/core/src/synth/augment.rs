//! Structure-aware edits of logical tables.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::random_word;
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    SpanMerge,
    SpanSplit,
    HeaderNest,
    ColumnGroup,
    RowInsert,
    RowDelete,
    ColInsert,
    ColDelete,
    /// Rendering-only: perturbs ruling positions and shades.
    LayoutJitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentOp {
    pub kind: AugmentKind,
    pub prob: f64,
}

/// An ordered op list plus the size limits that inserts must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentProfile {
    pub ops: Vec<AugmentOp>,
    pub max_rows: usize,
    pub max_cols: usize,
    pub max_span: usize,
}

impl AugmentProfile {
    pub fn none() -> Self {
        AugmentProfile { ops: Vec::new(), max_rows: 1024, max_cols: 1024, max_span: crate::tokenize::MAX_SPAN }
    }

    /// All ops at their default probabilities.
    pub fn standard(max_rows: usize, max_cols: usize, max_span: usize) -> Self {
        use AugmentKind::*;
        let ops = [
            (SpanMerge, 0.3),
            (SpanSplit, 0.2),
            (HeaderNest, 0.2),
            (ColumnGroup, 0.15),
            (RowInsert, 0.1),
            (RowDelete, 0.1),
            (ColInsert, 0.1),
            (ColDelete, 0.1),
            (LayoutJitter, 0.3),
        ]
        .into_iter()
        .map(|(kind, prob)| AugmentOp { kind, prob })
        .collect();
        AugmentProfile { ops, max_rows, max_cols, max_span }
    }

    /// `none` or `standard`.
    pub fn by_name(name: &str, max_rows: usize, max_cols: usize, max_span: usize) -> Option<Self> {
        match name {
            "none" => Some(Self::none()),
            "standard" | "default" => Some(Self::standard(max_rows, max_cols, max_span)),
            _ => None,
        }
    }
}

/// Result of one augmentation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub table: Table,
    /// One line per op that fired: applied or skipped with the reason.
    pub log: Vec<String>,
    pub jitter: bool,
}

/// Applies each op with its probability, in order. Ops that cannot apply
/// to the current table are skipped and logged.
pub fn augment(table: &Table, profile: &AugmentProfile, rng: &mut impl Rng) -> Augmented {
    let mut t = table.clone();
    let mut log = Vec::new();
    let mut jitter = false;
    for op in &profile.ops {
        if !rng.gen_bool(op.prob.clamp(0.0, 1.0)) {
            continue;
        }
        if op.kind == AugmentKind::LayoutJitter {
            jitter = true;
            log.push("layout_jitter: applied".into());
            continue;
        }
        match apply(&t, op.kind, profile, rng) {
            Ok(next) => {
                t = next;
                log.push(format!("{}: applied", name(op.kind)));
            }
            Err(why) => log.push(format!("{}: skipped ({why})", name(op.kind))),
        }
    }
    Augmented { table: t, log, jitter }
}

fn name(kind: AugmentKind) -> &'static str {
    match kind {
        AugmentKind::SpanMerge => "span_merge",
        AugmentKind::SpanSplit => "span_split",
        AugmentKind::HeaderNest => "header_nest",
        AugmentKind::ColumnGroup => "column_group",
        AugmentKind::RowInsert => "row_insert",
        AugmentKind::RowDelete => "row_delete",
        AugmentKind::ColInsert => "col_insert",
        AugmentKind::ColDelete => "col_delete",
        AugmentKind::LayoutJitter => "layout_jitter",
    }
}

/// Applies one structural op; `Err` carries the reason it does not apply.
pub fn apply(t: &Table, kind: AugmentKind, p: &AugmentProfile, rng: &mut impl Rng) -> Result<Table, String> {
    let (rows, cols) = (t.rows(), t.cols());
    let cells = t.cells().to_vec();
    let header_rows = t.header_rows();
    let out = match kind {
        AugmentKind::SpanMerge => {
            let vertical = rng.gen_bool(0.5);
            let (g, r, c) = oriented(cells, rows, cols, vertical);
            let ids: Vec<usize> = (0..g.len()).collect();
            let candidates: Vec<usize> = ids.into_iter().filter(|&i| mergeable(&g, c, i, p.max_span)).collect();
            if candidates.is_empty() {
                return Err("no mergeable neighbour".into());
            }
            let i = candidates[rng.gen_range(0..candidates.len())];
            let merged = merge(g, i);
            restore(merged, r, c, vertical)
        }
        AugmentKind::SpanSplit => {
            let vertical = rng.gen_bool(0.5);
            let (mut g, r, c) = oriented(cells, rows, cols, vertical);
            let candidates: Vec<usize> = (0..g.len()).filter(|&i| g[i].colspan > 1).collect();
            if candidates.is_empty() {
                return Err("no spanning cell on the chosen axis".into());
            }
            let i = candidates[rng.gen_range(0..candidates.len())];
            g[i].colspan -= 1;
            g[i].bbox = None;
            let x = g[i].clone();
            let mut new = Cell::new(x.row, x.col + x.colspan, random_word(rng, 4)).with_span(x.rowspan, 1);
            new.is_header = x.is_header;
            g.push(new);
            restore(g, r, c, vertical)
        }
        AugmentKind::HeaderNest => {
            if header_rows >= 2 {
                return Err("header already nested".into());
            }
            if cols < 2 || rows + 1 > p.max_rows {
                return Err("table too small or at the row limit".into());
            }
            let width = rng.gen_range(2..=cols.min(p.max_span.max(2)));
            let start = rng.gen_range(0..=cols - width);
            let mut top = Vec::new();
            let mut c = 0;
            while c < cols {
                let w = if c == start { width } else { 1 };
                top.push(Cell::new(0, c, random_word(rng, 4)).with_span(1, w).header(true));
                c += w;
            }
            let mut g = insert_row(cells, cols, 0, top);
            for cell in g.iter_mut().filter(|x| x.row == 1) {
                cell.is_header = true;
            }
            Table::new(rows + 1, cols, fix_headers(g)).map_err(|e| e.to_string())?
        }
        AugmentKind::ColumnGroup => {
            if cols < 3 || rows + 1 > p.max_rows {
                return Err("needs three columns and room for a row".into());
            }
            let mut top = Vec::new();
            let mut c = 0;
            while c < cols {
                let max_w = (cols - c).min(p.max_span.max(2));
                let w = rng.gen_range(1..=max_w);
                top.push(Cell::new(0, c, random_word(rng, 4)).with_span(1, w).header(true));
                c += w;
            }
            if top.iter().all(|x| x.colspan == 1) {
                top.truncate(0);
                top.push(Cell::new(0, 0, random_word(rng, 4)).with_span(1, 2).header(true));
                for c in 2..cols {
                    top.push(Cell::new(0, c, random_word(rng, 4)).header(true));
                }
            }
            Table::new(rows + 1, cols, fix_headers(insert_row(cells, cols, 0, top))).map_err(|e| e.to_string())?
        }
        AugmentKind::RowInsert | AugmentKind::ColInsert => {
            let vertical = kind == AugmentKind::ColInsert;
            let (limit, n) = if vertical { (p.max_cols, cols) } else { (p.max_rows, rows) };
            if n + 1 > limit {
                return Err("at the size limit".into());
            }
            let lo = if vertical { 0 } else { header_rows };
            let at = rng.gen_range(lo..=n);
            let (g, r, c) = oriented(cells, rows, cols, vertical);
            let fresh: Vec<Cell> = (0..c).map(|k| Cell::new(at, k, random_word(rng, 4))).collect();
            restore(insert_row(g, c, at, fresh), r + 1, c, vertical)
        }
        AugmentKind::RowDelete | AugmentKind::ColDelete => {
            let vertical = kind == AugmentKind::ColDelete;
            let n = if vertical { cols } else { rows };
            let lo = if vertical { 0 } else { header_rows };
            if n < 2 || lo >= n {
                return Err("nothing deletable".into());
            }
            let at = rng.gen_range(lo..n);
            let (g, r, c) = oriented(cells, rows, cols, vertical);
            restore(delete_row(g, at), r - 1, c, vertical)
        }
        AugmentKind::LayoutJitter => t.clone(),
    };
    let mut out = out;
    out.set_image_size(None);
    Ok(out)
}

/// Cells viewed so that the op's axis is horizontal (columns); `vertical`
/// swaps rows and columns. Returns the cells and the oriented grid size.
fn oriented(cells: Vec<Cell>, rows: usize, cols: usize, vertical: bool) -> (Vec<Cell>, usize, usize) {
    if !vertical {
        return (cells, rows, cols);
    }
    (cells.into_iter().map(swap).collect(), cols, rows)
}

fn restore(cells: Vec<Cell>, rows: usize, cols: usize, vertical: bool) -> Table {
    let (cells, rows, cols) = if vertical { (cells.into_iter().map(swap).collect(), cols, rows) } else { (cells, rows, cols) };
    Table::new(rows, cols, fix_headers(cells)).expect("augmentation keeps the grid tiled")
}

fn swap(c: Cell) -> Cell {
    let mut s = c.clone();
    s.row = c.col;
    s.col = c.row;
    s.rowspan = c.colspan;
    s.colspan = c.rowspan;
    s.bbox = c.bbox.map(|b| crate::table::BBox { x1: b.y1, y1: b.x1, x2: b.y2, y2: b.x2 });
    s
}

/// Whether cell `i` can absorb the column right of it: every slot there
/// within the cell's rows is owned by a one-column cell inside those rows.
fn mergeable(g: &[Cell], cols: usize, i: usize, max_span: usize) -> bool {
    let x = &g[i];
    let k = x.col + x.colspan;
    if k >= cols || x.colspan + 1 > max_span {
        return false;
    }
    let right: Vec<&Cell> = g.iter().filter(|o| o.col <= k && k <= o.last_col() && o.row <= x.last_row() && x.row <= o.last_row()).collect();
    !right.is_empty()
        && right.iter().all(|o| o.col == k && o.colspan == 1 && o.row >= x.row && o.last_row() <= x.last_row() && o.is_header == x.is_header)
}

fn merge(mut g: Vec<Cell>, i: usize) -> Vec<Cell> {
    let x = g[i].clone();
    let k = x.col + x.colspan;
    let absorbed: Vec<usize> = (0..g.len()).filter(|&j| g[j].col == k && g[j].row >= x.row && g[j].last_row() <= x.last_row()).collect();
    let mut bbox = x.bbox;
    let mut text = x.text.clone();
    for &j in &absorbed {
        bbox = match (bbox, g[j].bbox) {
            (Some(a), Some(b)) => Some(a.union(&b)),
            _ => None,
        };
        if text.is_empty() {
            text = g[j].text.clone();
        }
    }
    g[i].colspan += 1;
    g[i].bbox = bbox;
    g[i].text = text;
    let mut idx = 0;
    g.retain(|_| {
        let keep = !absorbed.contains(&idx);
        idx += 1;
        keep
    });
    g
}

/// Inserts a row before `at`; cells spanning across the insertion point
/// grow, and `fresh` cells fill the remaining slots of the new row.
fn insert_row(mut g: Vec<Cell>, cols: usize, at: usize, fresh: Vec<Cell>) -> Vec<Cell> {
    let mut covered = vec![false; cols];
    for c in &mut g {
        if c.row >= at {
            c.row += 1;
        } else if c.last_row() >= at {
            c.rowspan += 1;
            c.bbox = None;
            for k in c.col..=c.last_col() {
                covered[k] = true;
            }
        }
    }
    for mut f in fresh {
        f.row = at;
        if (f.col..f.col + f.colspan).all(|k| !covered[k]) {
            g.push(f);
        } else {
            for k in f.col..f.col + f.colspan {
                if !covered[k] {
                    g.push(Cell::new(at, k, f.text.clone()).header(f.is_header));
                }
            }
        }
    }
    g
}

fn delete_row(g: Vec<Cell>, at: usize) -> Vec<Cell> {
    g.into_iter()
        .filter_map(|mut c| {
            if c.row > at {
                c.row -= 1;
            } else if c.last_row() >= at {
                if c.rowspan == 1 {
                    return None;
                }
                c.rowspan -= 1;
                c.bbox = None;
            }
            Some(c)
        })
        .collect()
}

/// Marks every cell anchored inside the header prefix as a header.
fn fix_headers(mut cells: Vec<Cell>) -> Vec<Cell> {
    let h = cells.iter().filter(|c| c.is_header).map(|c| c.row + 1).max().unwrap_or(0);
    for c in &mut cells {
        c.is_header = c.row < h;
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rectangular(t: &Table) -> bool {
        let area: usize = t.cells().iter().map(|c| c.rowspan * c.colspan).sum();
        area == t.rows() * t.cols() && Table::new(t.rows(), t.cols(), t.cells().to_vec()).is_ok()
    }

    #[test]
    fn merge_two_by_two() {
        let t = Table::from_texts(2, 2, &["a", "b", "c", "d"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AugmentProfile::none();
        let mut seen = false;
        for _ in 0..20 {
            let m = apply(&t, AugmentKind::SpanMerge, &p, &mut rng).unwrap();
            assert_eq!(m.cells().len(), 3);
            assert!(rectangular(&m));
            seen |= m.cells().iter().any(|c| c.colspan == 2);
        }
        assert!(seen);
    }

    #[test]
    fn empty_profile_is_identity() {
        let t = Table::from_texts(2, 3, &["a", "b", "c", "d", "e", "f"]).unwrap();
        let out = augment(&t, &AugmentProfile::none(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.table, t);
        assert!(out.log.is_empty());
    }

    #[test]
    fn delete_keeps_spanning_cells() {
        let t = Table::new(2, 2, vec![Cell::new(0, 0, "a").with_span(2, 1), Cell::new(0, 1, "b"), Cell::new(1, 1, "d")]).unwrap();
        let d = Table::new(1, 2, delete_row(t.cells().to_vec(), 0)).unwrap();
        assert_eq!(d.cells().iter().map(|c| c.text.as_str()).collect::<Vec<_>>(), vec!["a", "d"]);
    }

    #[test]
    fn random_chains_stay_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = AugmentProfile::standard(8, 10, 4);
        for _ in 0..1000 {
            let mut t = super::super::random_table(&mut rng, 1..=6, 1..=6, 3);
            for _ in 0..3 {
                let out = augment(&t, &p, &mut rng);
                assert!(rectangular(&out.table), "{:?}", out.log);
                t = out.table;
            }
            assert!(t.rows() <= 8 && t.cols() <= 10);
        }
    }
}
