use crate::error::{Error, Result};
use crate::table::Table;

/// Separator positions and their activity per grid slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundaries {
    /// `R - 1` internal row boundaries, strictly increasing.
    pub row_y: Vec<u32>,
    /// `C - 1` internal column boundaries, strictly increasing.
    pub col_x: Vec<u32>,
    /// Table extent `(top, bottom)` from the union of boxes.
    pub y_extent: (u32, u32),
    /// Table extent `(left, right)`.
    pub x_extent: (u32, u32),
    /// `h_sep[r][c]`: owners of slots `(r,c)` and `(r+1,c)` differ.
    pub h_sep: Vec<Vec<bool>>,
    /// `v_sep[r][c]`: owners of slots `(r,c)` and `(r,c+1)` differ.
    pub v_sep: Vec<Vec<bool>>,
}

impl Boundaries {
    /// Pixel range `[lo, hi]` covered by column `c`.
    pub fn col_range(&self, c: usize) -> (u32, u32) {
        span_range(&self.col_x, self.x_extent, c)
    }

    /// Pixel range `[lo, hi]` covered by row `r`.
    pub fn row_range(&self, r: usize) -> (u32, u32) {
        span_range(&self.row_y, self.y_extent, r)
    }
}

fn span_range(cuts: &[u32], extent: (u32, u32), i: usize) -> (u32, u32) {
    let lo = if i == 0 { extent.0 } else { cuts[i - 1] };
    let hi = if i == cuts.len() { extent.1 } else { cuts[i] };
    (lo, hi)
}

/// Median of a non-empty list; even counts average the middle pair.
pub(crate) fn median(values: &mut [u32]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

/// Snaps each internal boundary to the median of the edges that abut it.
///
/// Row boundary `r` (between rows `r` and `r + 1`) collects the bottom edge
/// of every cell whose last row is `r` and the top edge of every cell whose
/// first row is `r + 1`. Boundaries without evidence are spread evenly
/// between their nearest resolved neighbours. Positions are then clipped to
/// be strictly increasing inside the image.
pub fn align_boundaries(table: &Table) -> Result<Boundaries> {
    let (h, w) = table.image_size().ok_or(Error::MissingImageSize)?;
    if !table.has_all_boxes() {
        return Err(Error::MissingBoxes);
    }
    let boxes: Vec<_> = table.cells().iter().map(|c| c.bbox.unwrap()).collect();
    let x_extent = (
        boxes.iter().map(|b| b.x1).min().unwrap().min(w.saturating_sub(1)),
        boxes.iter().map(|b| b.x2).max().unwrap().min(w.saturating_sub(1)),
    );
    let y_extent = (
        boxes.iter().map(|b| b.y1).min().unwrap().min(h.saturating_sub(1)),
        boxes.iter().map(|b| b.y2).max().unwrap().min(h.saturating_sub(1)),
    );

    let row_evidence: Vec<Vec<u32>> = (0..table.rows().saturating_sub(1))
        .map(|r| {
            table
                .cells()
                .iter()
                .filter_map(|c| {
                    let b = c.bbox.unwrap();
                    if c.last_row() == r {
                        Some(b.y2)
                    } else if c.row == r + 1 {
                        Some(b.y1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let col_evidence: Vec<Vec<u32>> = (0..table.cols().saturating_sub(1))
        .map(|k| {
            table
                .cells()
                .iter()
                .filter_map(|c| {
                    let b = c.bbox.unwrap();
                    if c.last_col() == k {
                        Some(b.x2)
                    } else if c.col == k + 1 {
                        Some(b.x1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();

    let og = table.owner_grid();
    let h_sep = (0..table.rows().saturating_sub(1))
        .map(|r| (0..table.cols()).map(|c| og.h_sep(r, c)).collect())
        .collect();
    let v_sep = (0..table.rows())
        .map(|r| (0..table.cols().saturating_sub(1)).map(|c| og.v_sep(r, c)).collect())
        .collect();

    Ok(Boundaries {
        row_y: resolve(row_evidence, y_extent, h),
        col_x: resolve(col_evidence, x_extent, w),
        y_extent,
        x_extent,
        h_sep,
        v_sep,
    })
}

/// Medians, gap filling and monotone clipping for one axis.
fn resolve(evidence: Vec<Vec<u32>>, extent: (u32, u32), size: u32) -> Vec<u32> {
    let n = evidence.len();
    let mut pos: Vec<Option<f64>> = evidence
        .into_iter()
        .map(|mut e| if e.is_empty() { None } else { Some(median(&mut e)) })
        .collect();
    // Spread unresolved boundaries evenly between resolved neighbours (or
    // the table extent), as if the rows in that gap had equal height.
    let mut k = 0;
    while k < n {
        if pos[k].is_some() {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && pos[k].is_none() {
            k += 1;
        }
        let lo = if start == 0 { extent.0 as f64 } else { pos[start - 1].unwrap() };
        let hi = if k == n { extent.1 as f64 } else { pos[k].unwrap() };
        let steps = (k - start + 1) as f64;
        for (j, p) in pos[start..k].iter_mut().enumerate() {
            *p = Some(lo + (hi - lo) * (j + 1) as f64 / steps);
        }
    }
    let mut out: Vec<i64> = pos.into_iter().map(|p| (p.unwrap() + 0.5).floor() as i64).collect();
    let top = size as i64 - 1;
    for i in 0..n {
        let floor = if i == 0 { 0 } else { out[i - 1] + 1 };
        out[i] = out[i].max(floor);
    }
    for i in (0..n).rev() {
        let ceil = if i + 1 == n { top } else { out[i + 1] - 1 };
        out[i] = out[i].min(ceil);
    }
    out.into_iter().map(|v| v.max(0) as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{BBox, Cell};

    #[test]
    fn stacked_cells_median() {
        let cells = vec![
            Cell::new(0, 0, "a").with_bbox(BBox::new(0, 0, 50, 30).unwrap()),
            Cell::new(1, 0, "b").with_bbox(BBox::new(0, 34, 50, 60).unwrap()),
        ];
        let t = Table::new(2, 1, cells).unwrap().with_image_size(64, 64);
        let b = align_boundaries(&t).unwrap();
        assert_eq!(b.row_y, vec![32]);
        assert!(b.col_x.is_empty());
        assert_eq!(b.h_sep, vec![vec![true]]);
    }

    #[test]
    fn one_cell_has_no_internal_boundaries() {
        let t = Table::new(1, 1, vec![Cell::new(0, 0, "a").with_bbox(BBox::new(2, 2, 9, 9).unwrap())])
            .unwrap()
            .with_image_size(16, 16);
        let b = align_boundaries(&t).unwrap();
        assert!(b.row_y.is_empty() && b.col_x.is_empty());
        assert_eq!((b.x_extent, b.y_extent), ((2, 9), (2, 9)));
    }

    #[test]
    fn errors() {
        let t = Table::from_texts(1, 1, &["a"]).unwrap();
        assert!(matches!(align_boundaries(&t), Err(Error::MissingImageSize)));
        assert!(matches!(align_boundaries(&t.with_image_size(4, 4)), Err(Error::MissingBoxes)));
    }

    #[test]
    fn gap_without_evidence_is_spread_evenly() {
        let mut out = resolve(vec![vec![10], vec![], vec![], vec![40]], (0, 50), 100);
        assert_eq!(out, vec![10, 20, 30, 40]);
        out = resolve(vec![vec![], vec![]], (0, 30), 100);
        assert_eq!(out, vec![10, 20]);
    }

    #[test]
    fn clipping_enforces_strict_order() {
        assert_eq!(resolve(vec![vec![20], vec![10], vec![10]], (0, 30), 100), vec![20, 21, 22]);
        assert_eq!(resolve(vec![vec![9], vec![9], vec![9]], (0, 9), 10), vec![7, 8, 9]);
    }
}
