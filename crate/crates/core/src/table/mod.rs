//! Logical table model.
//!
//! A [`Table`] is a grid of `rows x cols` slots tiled exactly once by
//! rectangular [`Cell`]s. Everything else (markup, token sequences,
//! structure targets, metrics) is derived from it.

mod adjacency;
mod annotation;
pub(crate) mod markup;
mod query;

pub use adjacency::{adjacency, AdjacencyGraph, Direction};
pub use annotation::{read_jsonl, write_jsonl, AnnotationCell, AnnotationRecord};
pub use markup::{emit_markup, escape_text, parse_markup};
pub use query::{query_cell, query_col, query_row, QueryPolicy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel box, inclusive-exclusive semantics are left to the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        BBox { x1: v[0], y1: v[1], x2: v[2], y2: v[3] }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(Error::InvalidTable(format!("inverted box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() as f64 * self.height() as f64
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Intersection-over-union with continuous box areas.
    ///
    /// Two identical zero-area boxes have IoU 1.
    pub fn iou(&self, other: &BBox) -> f64 {
        if self == other {
            return 1.0;
        }
        let ix = (self.x2.min(other.x2) as f64 - self.x1.max(other.x1) as f64).max(0.0);
        let iy = (self.y2.min(other.y2) as f64 - self.y1.max(other.y1) as f64).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One spanning cell anchored at its top-left slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    pub text: String,
    pub bbox: Option<BBox>,
    pub is_header: bool,
}

impl Cell {
    /// A 1x1 body cell; the id is reassigned when the table is built.
    pub fn new(row: usize, col: usize, text: impl Into<String>) -> Self {
        Cell {
            id: 0,
            row,
            col,
            rowspan: 1,
            colspan: 1,
            text: text.into(),
            bbox: None,
            is_header: false,
        }
    }

    pub fn with_span(mut self, rowspan: usize, colspan: usize) -> Self {
        self.rowspan = rowspan;
        self.colspan = colspan;
        self
    }

    pub fn with_bbox(mut self, bbox: BBox) -> Self {
        self.bbox = Some(bbox);
        self
    }

    pub fn header(mut self, is_header: bool) -> Self {
        self.is_header = is_header;
        self
    }

    pub fn last_row(&self) -> usize {
        self.row + self.rowspan - 1
    }

    pub fn last_col(&self) -> usize {
        self.col + self.colspan - 1
    }

    pub fn covers(&self, r: usize, c: usize) -> bool {
        r >= self.row && r <= self.last_row() && c >= self.col && c <= self.last_col()
    }
}

/// A validated, rectangular table.
///
/// Cells are kept in document order (row-major by anchor) and their ids
/// equal their position in that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    /// `(height, width)` of the source image in pixels.
    image_size: Option<(u32, u32)>,
}

impl Table {
    /// Validates the tiling, sorts cells into document order and renumbers ids.
    pub fn new(rows: usize, cols: usize, mut cells: Vec<Cell>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::NonRectangular(format!("empty grid {rows}x{cols}")));
        }
        cells.sort_by_key(|c| (c.row, c.col));
        let mut grid = vec![usize::MAX; rows * cols];
        for (id, cell) in cells.iter_mut().enumerate() {
            cell.id = id;
            if cell.rowspan == 0 || cell.colspan == 0 {
                return Err(Error::NonRectangular(format!("cell {id} has a zero span")));
            }
            if cell.row + cell.rowspan > rows || cell.col + cell.colspan > cols {
                return Err(Error::NonRectangular(format!(
                    "cell {id} at ({},{}) span {}x{} leaves the {rows}x{cols} grid",
                    cell.row, cell.col, cell.rowspan, cell.colspan
                )));
            }
            if let Some(b) = &cell.bbox {
                b.validate()?;
            }
            for r in cell.row..cell.row + cell.rowspan {
                for c in cell.col..cell.col + cell.colspan {
                    let slot = &mut grid[r * cols + c];
                    if *slot != usize::MAX {
                        return Err(Error::NonRectangular(format!(
                            "slot ({r},{c}) claimed by cells {} and {id}",
                            *slot
                        )));
                    }
                    *slot = id;
                }
            }
        }
        if let Some(pos) = grid.iter().position(|&s| s == usize::MAX) {
            return Err(Error::NonRectangular(format!(
                "slot ({},{}) is not covered",
                pos / cols,
                pos % cols
            )));
        }
        let header_rows = cells.iter().filter(|c| c.is_header).map(|c| c.row + 1).max().unwrap_or(0);
        if let Some(c) = cells.iter().find(|c| c.row < header_rows && !c.is_header) {
            return Err(Error::InvalidTable(format!(
                "header rows must form a prefix; cell {} in row {} is not a header",
                c.id, c.row
            )));
        }
        Ok(Table { rows, cols, cells, image_size: None })
    }

    /// Plain `rows x cols` table without spans; texts are given row-major.
    pub fn from_texts(rows: usize, cols: usize, texts: &[&str]) -> Result<Self> {
        if texts.len() != rows * cols {
            return Err(Error::InvalidTable(format!(
                "{} texts for a {rows}x{cols} grid",
                texts.len()
            )));
        }
        let cells = (0..rows * cols).map(|i| Cell::new(i / cols, i % cols, texts[i])).collect();
        Table::new(rows, cols, cells)
    }

    pub fn with_image_size(mut self, height: u32, width: u32) -> Self {
        self.image_size = Some((height, width));
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> Option<&Cell> {
        self.cells.get(id)
    }

    pub fn image_size(&self) -> Option<(u32, u32)> {
        self.image_size
    }

    pub fn set_image_size(&mut self, size: Option<(u32, u32)>) {
        self.image_size = size;
    }

    pub fn set_text(&mut self, id: usize, text: impl Into<String>) {
        self.cells[id].text = text.into();
    }

    pub fn set_bbox(&mut self, id: usize, bbox: Option<BBox>) {
        self.cells[id].bbox = bbox;
    }

    pub fn clear_boxes(&mut self) {
        for c in &mut self.cells {
            c.bbox = None;
        }
    }

    pub fn into_cells(self) -> Vec<Cell> {
        self.cells
    }

    /// Number of leading rows whose anchored cells are headers.
    pub fn header_rows(&self) -> usize {
        self.cells.iter().filter(|c| c.is_header).map(|c| c.row + 1).max().unwrap_or(0)
    }

    pub fn has_all_boxes(&self) -> bool {
        self.cells.iter().all(|c| c.bbox.is_some())
    }

    /// Cells anchored in row `r`, left to right.
    pub fn row_cells(&self, r: usize) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.row == r)
    }

    pub fn owner_grid(&self) -> OwnerGrid {
        owner_grid(self)
    }

    /// Swaps rows and columns (and box axes). Header flags are dropped since
    /// a transposed header row is no longer a row prefix.
    pub fn transpose(&self) -> Table {
        let cells = self
            .cells
            .iter()
            .map(|c| Cell {
                id: 0,
                row: c.col,
                col: c.row,
                rowspan: c.colspan,
                colspan: c.rowspan,
                text: c.text.clone(),
                bbox: c.bbox.map(|b| BBox { x1: b.y1, y1: b.x1, x2: b.y2, y2: b.x2 }),
                is_header: false,
            })
            .collect();
        let mut t = Table::new(self.cols, self.rows, cells).expect("transpose preserves tiling");
        t.image_size = self.image_size.map(|(h, w)| (w, h));
        t
    }
}

/// `rows x cols` matrix of owning cell ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnerGrid {
    rows: usize,
    cols: usize,
    ids: Vec<usize>,
}

impl OwnerGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> usize {
        self.ids[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<usize>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Row separator activity between row `r` and `r + 1` at column `c`.
    pub fn h_sep(&self, r: usize, c: usize) -> bool {
        self.get(r, c) != self.get(r + 1, c)
    }

    /// Column separator activity between column `c` and `c + 1` at row `r`.
    pub fn v_sep(&self, r: usize, c: usize) -> bool {
        self.get(r, c) != self.get(r, c + 1)
    }
}

pub fn owner_grid(table: &Table) -> OwnerGrid {
    let mut ids = vec![0; table.rows * table.cols];
    for cell in &table.cells {
        for r in cell.row..=cell.last_row() {
            for c in cell.col..=cell.last_col() {
                ids[r * table.cols + c] = cell.id;
            }
        }
    }
    OwnerGrid { rows: table.rows, cols: table.cols, ids }
}


#[cfg(test)]
mod tests {
    use super::fixtures::spanned_3x3;
    use super::*;

    #[test]
    fn owner_grid_examples() {
        assert_eq!(spanned_3x3().owner_grid().to_rows(), vec![vec![0, 0, 1], vec![0, 0, 2], vec![3, 4, 5]]);
        let one = Table::from_texts(1, 1, &["x"]).unwrap();
        assert_eq!(one.owner_grid().to_rows(), vec![vec![0]]);
        let two = Table::from_texts(2, 2, &["a", "b", "c", "d"]).unwrap();
        assert_eq!(two.owner_grid().to_rows(), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn ids_follow_document_order() {
        let cells = vec![Cell::new(1, 0, "c"), Cell::new(0, 1, "b"), Cell::new(0, 0, "a"), Cell::new(1, 1, "d")];
        let t = Table::new(2, 2, cells).unwrap();
        let texts: Vec<_> = t.cells().iter().map(|c| (c.id, c.text.as_str())).collect();
        assert_eq!(texts, vec![(0, "a"), (1, "b"), (2, "c"), (3, "d")]);
    }

    #[test]
    fn rejects_overlap_and_holes() {
        let overlap = vec![Cell::new(0, 0, "a").with_span(1, 2), Cell::new(0, 1, "b")];
        assert!(matches!(Table::new(1, 2, overlap), Err(Error::NonRectangular(_))));
        let hole = vec![Cell::new(0, 0, "a")];
        assert!(matches!(Table::new(1, 2, hole), Err(Error::NonRectangular(_))));
        let outside = vec![Cell::new(0, 0, "a").with_span(2, 1)];
        assert!(matches!(Table::new(1, 1, outside), Err(Error::NonRectangular(_))));
    }

    #[test]
    fn header_must_be_prefix() {
        let cells = vec![Cell::new(0, 0, "a"), Cell::new(1, 0, "b").header(true)];
        assert!(matches!(Table::new(2, 1, cells), Err(Error::InvalidTable(_))));
        let cells = vec![Cell::new(0, 0, "a").header(true), Cell::new(1, 0, "b")];
        assert_eq!(Table::new(2, 1, cells).unwrap().header_rows(), 1);
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0, 0, 10, 10).unwrap();
        let b = BBox::new(5, 0, 15, 10).unwrap();
        assert_eq!(a.iou(&a), 1.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.iou(&BBox::new(20, 20, 30, 30).unwrap()), 0.0);
    }

    #[test]
    fn transpose_twice_is_identity_without_headers() {
        let t = spanned_3x3();
        assert_eq!(t.transpose().transpose(), t);
    }
}
