//! Line-delimited JSON sample records.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BBox, Cell, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCell {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_header: bool,
}

/// One sample: image path, markup, and the cell list.
///
/// Optional fields are written by the dataset generator and ignored when
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image: String,
    pub markup: String,
    pub cells: Vec<AnnotationCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AnnotationRecord {
    pub fn from_table(table: &Table, image: impl Into<String>, markup: impl Into<String>) -> Self {
        let cells = table
            .cells()
            .iter()
            .map(|c| AnnotationCell {
                id: c.id,
                row: c.row,
                col: c.col,
                rowspan: c.rowspan,
                colspan: c.colspan,
                text: c.text.clone(),
                bbox: c.bbox,
                is_header: c.is_header,
            })
            .collect();
        AnnotationRecord {
            image: image.into(),
            markup: markup.into(),
            cells,
            rows: Some(table.rows()),
            cols: Some(table.cols()),
            height: table.image_size().map(|s| s.0),
            width: table.image_size().map(|s| s.1),
            split: None,
            targets: None,
            seed: None,
        }
    }

    /// Rebuilds the table from the cell list (exact pixel boxes).
    pub fn to_table(&self) -> Result<Table> {
        let rows = self
            .rows
            .unwrap_or_else(|| self.cells.iter().map(|c| c.row + c.rowspan).max().unwrap_or(0));
        let cols = self
            .cols
            .unwrap_or_else(|| self.cells.iter().map(|c| c.col + c.colspan).max().unwrap_or(0));
        let cells = self
            .cells
            .iter()
            .map(|c| Cell {
                id: c.id,
                row: c.row,
                col: c.col,
                rowspan: c.rowspan,
                colspan: c.colspan,
                text: c.text.clone(),
                bbox: c.bbox,
                is_header: c.is_header,
            })
            .collect();
        let mut t = Table::new(rows, cols, cells)?;
        if let (Some(h), Some(w)) = (self.height, self.width) {
            t.set_image_size(Some((h, w)));
        }
        Ok(t)
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.as_ref().display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
