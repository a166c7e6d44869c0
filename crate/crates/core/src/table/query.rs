//! Index-based cell, row and column queries.

use super::Table;
use crate::error::{Error, Result};

/// How a query on a non-anchor slot of a merged cell is answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryPolicy {
    /// The owning cell's text.
    #[default]
    OwnerText,
    /// Empty string unless the slot is the cell's top-left anchor.
    AnchorOnly,
}

pub fn query_cell(table: &Table, i: usize, j: usize, policy: QueryPolicy) -> Result<String> {
    if i >= table.rows() {
        return Err(Error::IndexOutOfRange { index: i, bound: table.rows() });
    }
    if j >= table.cols() {
        return Err(Error::IndexOutOfRange { index: j, bound: table.cols() });
    }
    let cell = &table.cells()[table.owner_grid().get(i, j)];
    let is_anchor = cell.row == i && cell.col == j;
    Ok(match policy {
        QueryPolicy::AnchorOnly if !is_anchor => String::new(),
        _ => cell.text.clone(),
    })
}

/// Left-to-right texts of row `i`, spans expanded.
pub fn query_row(table: &Table, i: usize) -> Result<Vec<String>> {
    if i >= table.rows() {
        return Err(Error::IndexOutOfRange { index: i, bound: table.rows() });
    }
    let grid = table.owner_grid();
    Ok(grid.row(i).iter().map(|&id| table.cells()[id].text.clone()).collect())
}

/// Top-to-bottom texts of column `j`, spans expanded.
pub fn query_col(table: &Table, j: usize) -> Result<Vec<String>> {
    if j >= table.cols() {
        return Err(Error::IndexOutOfRange { index: j, bound: table.cols() });
    }
    let grid = table.owner_grid();
    Ok((0..table.rows()).map(|r| table.cells()[grid.get(r, j)].text.clone()).collect())
}
