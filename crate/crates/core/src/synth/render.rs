//! In-place rendering of a logical table onto a ruled grayscale canvas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::font::{draw_text, text_extent, GLYPH_H};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::quant::QuantSpec;
use crate::table::{emit_markup, BBox, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Align {
    Left,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    /// Canvas `(height, width)` in pixels.
    pub canvas: (usize, usize),
    /// Blank border around the outer ruling.
    pub margin: usize,
    pub max_scale: usize,
    /// Ruling thickness; 0 draws no rulings.
    pub line: usize,
    pub background: u8,
    pub ink: u8,
    pub ruling: u8,
    pub align: Align,
    /// Ruling positions move by up to this fraction of the pitch.
    pub jitter: f64,
    /// Marker appended to truncated text.
    pub truncation_marker: char,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            canvas: (64, 128),
            margin: 2,
            max_scale: 1,
            line: 1,
            background: 255,
            ink: 0,
            ruling: 0,
            align: Align::Center,
            jitter: 0.0,
            truncation_marker: '~',
        }
    }
}

/// Modal shade of the pixels within a band along the box border.
///
/// The band is `max(1, min(w, h) / 4)` pixels wide so thin rulings on the
/// border do not outvote the background. Ties go to the lighter shade.
pub fn estimate_bg(img: &Image, b: &BBox) -> u8 {
    let (x1, y1, x2, y2) = clip(img, b);
    let (w, h) = (x2.saturating_sub(x1), y2.saturating_sub(y1));
    if w == 0 || h == 0 {
        return 255;
    }
    let band = (w.min(h) / 4).max(1);
    let mut hist = [0usize; 256];
    for y in y1..y2 {
        for x in x1..x2 {
            let d = (y - y1).min(y2 - 1 - y).min(x - x1).min(x2 - 1 - x);
            if d < band {
                hist[img.at(y, x) as usize] += 1;
            }
        }
    }
    let max = *hist.iter().max().unwrap();
    (0..256).rev().find(|&v| hist[v] == max).unwrap() as u8
}

/// Run length of non-background pixels inward from each edge, as
/// `(top, right, bottom, left)`; the minimum over probes at 1/4, 1/2 and
/// 3/4 of the edge.
pub fn edge_thickness(img: &Image, b: &BBox, bg: u8) -> (usize, usize, usize, usize) {
    let (x1, y1, x2, y2) = clip(img, b);
    if x2 <= x1 || y2 <= y1 {
        return (0, 0, 0, 0);
    }
    let (w, h) = (x2 - x1, y2 - y1);
    let probes = |n: usize| [n / 4, n / 2, (3 * n) / 4];
    let run = |pts: &mut dyn Iterator<Item = (usize, usize)>| pts.take_while(|&(y, x)| img.at(y, x) != bg).count();
    let top = probes(w).iter().map(|&dx| run(&mut (y1..y2).map(|y| (y, x1 + dx)))).min().unwrap();
    let bottom = probes(w).iter().map(|&dx| run(&mut (y1..y2).rev().map(|y| (y, x1 + dx)))).min().unwrap();
    let left = probes(h).iter().map(|&dy| run(&mut (x1..x2).map(|x| (y1 + dy, x)))).min().unwrap();
    let right = probes(h).iter().map(|&dy| run(&mut (x1..x2).rev().map(|x| (y1 + dy, x)))).min().unwrap();
    (top, right, bottom, left)
}

/// Shrinks `b` by each edge thickness plus a 1 px margin.
pub fn inner_region(b: &BBox, (t, r, bo, l): (usize, usize, usize, usize)) -> Result<BBox> {
    let x1 = b.x1 as usize + l + 1;
    let y1 = b.y1 as usize + t + 1;
    let x2 = (b.x2 as usize).checked_sub(r + 1);
    let y2 = (b.y2 as usize).checked_sub(bo + 1);
    match (x2, y2) {
        (Some(x2), Some(y2)) if x1 < x2 && y1 < y2 => Ok(BBox { x1: x1 as u32, y1: y1 as u32, x2: x2 as u32, y2: y2 as u32 }),
        _ => Err(Error::Unusable(format!("no safe region inside {b:?}"))),
    }
}

fn clip(img: &Image, b: &BBox) -> (usize, usize, usize, usize) {
    let x2 = (b.x2 as usize).min(img.width);
    let y2 = (b.y2 as usize).min(img.height);
    ((b.x1 as usize).min(x2), (b.y1 as usize).min(y2), x2, y2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitText {
    pub scale: usize,
    pub text: String,
    pub truncated: bool,
}

/// Largest integer scale (up to `max_scale`) at which `text` fits `inner`;
/// text that does not fit at scale 1 is cut and suffixed with `marker`.
pub fn fit_text(text: &str, max_scale: usize, marker: char, inner: &BBox) -> Option<FitText> {
    let (w, h) = (inner.width() as usize, inner.height() as usize);
    let fits = |t: &str, s: usize| {
        let (tw, th) = text_extent(t, s);
        tw <= w && th <= h
    };
    if text.is_empty() {
        return Some(FitText { scale: 1, text: String::new(), truncated: false });
    }
    if fits(text, 1) {
        let scale = (1..=max_scale.max(1)).rev().find(|&s| fits(text, s)).unwrap();
        return Some(FitText { scale, text: text.to_owned(), truncated: false });
    }
    let chars: Vec<char> = text.chars().collect();
    for keep in (0..chars.len()).rev() {
        let mut t: String = chars[..keep].iter().collect();
        t.push(marker);
        if fits(&t, 1) {
            return Some(FitText { scale: 1, text: t, truncated: true });
        }
    }
    None
}

/// Output of [`render_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Image,
    /// Input table with fitted text and tight text boxes.
    pub table: Table,
    pub markup: String,
    /// Drawn ruling centre lines: `(y, x_from, x_to)` horizontal and
    /// `(x, y_from, y_to)` vertical segments, half-open.
    pub h_rules: Vec<(usize, usize, usize)>,
    pub v_rules: Vec<(usize, usize, usize)>,
    pub log: Vec<String>,
}

/// Even pitch between `lo` and `hi` for `n` intervals, each interior
/// position moved by up to `jitter` of the pitch.
fn positions(lo: usize, hi: usize, n: usize, jitter: f64, rng: &mut impl Rng) -> Vec<usize> {
    let pitch = (hi - lo) as f64 / n as f64;
    let mut p: Vec<usize> = (0..=n).map(|k| (lo as f64 + k as f64 * pitch).round() as usize).collect();
    if jitter > 0.0 {
        let amp = (pitch * jitter).floor() as i64;
        for k in 1..n {
            if amp > 0 {
                let d = rng.gen_range(-amp..=amp);
                p[k] = (p[k] as i64 + d) as usize;
            }
        }
    }
    p
}

/// Renders `table` onto a fresh canvas: rulings along every drawn cell
/// border, then each cell's inner region wiped and filled with its text.
///
/// Cells whose inner region cannot hold one glyph are left empty and
/// logged; their box is the centre point of the cell.
pub fn render_sample(table: &Table, style: &RenderStyle, quant: QuantSpec, rng: &mut impl Rng) -> Result<Rendered> {
    let (hh, ww) = style.canvas;
    let (rows, cols) = (table.rows(), table.cols());
    let m = style.margin;
    let t = style.line;
    if hh < 2 * m + t + 1 || ww < 2 * m + t + 1 {
        return Err(Error::InvalidConfig(format!("canvas {hh}x{ww} too small")));
    }
    let ys = positions(m, hh - m - t, rows, style.jitter, rng);
    let xs = positions(m, ww - m - t, cols, style.jitter, rng);
    let mut img = Image::filled(hh, ww, 1, style.background);
    let grid = table.owner_grid();
    let (mut h_rules, mut v_rules) = (Vec::new(), Vec::new());
    if t > 0 {
        // Horizontal rulings, one segment per column slot where the owners differ.
        for (k, &y) in ys.iter().enumerate() {
            for c in 0..cols {
                let drawn = k == 0 || k == rows || grid.get(k - 1, c) != grid.get(k, c);
                if drawn {
                    img.fill_rect(xs[c], y, xs[c + 1] + t, y + t, style.ruling);
                    h_rules.push((y + t / 2, xs[c], xs[c + 1] + t));
                }
            }
        }
        for (k, &x) in xs.iter().enumerate() {
            for r in 0..rows {
                let drawn = k == 0 || k == cols || grid.get(r, k - 1) != grid.get(r, k);
                if drawn {
                    img.fill_rect(x, ys[r], x + t, ys[r + 1] + t, style.ruling);
                    v_rules.push((x + t / 2, ys[r], ys[r + 1] + t));
                }
            }
        }
    }
    let mut out = table.clone();
    out.set_image_size(Some((hh as u32, ww as u32)));
    let mut log = Vec::new();
    for cell in table.cells() {
        let region = BBox {
            x1: xs[cell.col] as u32,
            y1: ys[cell.row] as u32,
            x2: (xs[cell.last_col() + 1] + t) as u32,
            y2: (ys[cell.last_row() + 1] + t) as u32,
        };
        let centre = BBox {
            x1: (region.x1 + region.x2) / 2,
            y1: (region.y1 + region.y2) / 2,
            x2: (region.x1 + region.x2) / 2,
            y2: (region.y1 + region.y2) / 2,
        };
        let bg = estimate_bg(&img, &region);
        let fitted = inner_region(&region, edge_thickness(&img, &region, bg))
            .ok()
            .and_then(|inner| fit_text(&cell.text, style.max_scale, style.truncation_marker, &inner).map(|f| (inner, f)));
        let Some((inner, fit)) = fitted else {
            log.push(Error::CellTooSmall { cell: cell.id }.to_string());
            out.set_text(cell.id, "");
            out.set_bbox(cell.id, Some(centre));
            continue;
        };
        img.fill_rect(inner.x1 as usize, inner.y1 as usize, inner.x2 as usize, inner.y2 as usize, bg);
        if fit.truncated {
            log.push(format!("cell {}: text truncated to {:?}", cell.id, fit.text));
        }
        let (tw, th) = text_extent(&fit.text, fit.scale);
        let x = match style.align {
            Align::Left => inner.x1 as usize,
            Align::Center => inner.x1 as usize + (inner.width() as usize - tw) / 2,
        };
        let y = inner.y1 as usize + (inner.height() as usize).saturating_sub(th.max(GLYPH_H)) / 2;
        let ext = draw_text(&mut img, x, y, &fit.text, fit.scale, style.ink);
        let bbox = match ext {
            Some((x1, y1, x2, y2)) => BBox { x1: x1 as u32, y1: y1 as u32, x2: x2 as u32, y2: y2 as u32 },
            None => centre,
        };
        out.set_text(cell.id, fit.text);
        out.set_bbox(cell.id, Some(bbox));
    }
    let markup = emit_markup(&out, true, quant)?;
    Ok(Rendered { image: img, table: out, markup, h_rules, v_rules, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_markup;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bordered(size: usize, border: usize) -> Image {
        let mut img = Image::filled(size, size, 1, 200);
        img.fill_rect(0, 0, size, border, 0);
        img.fill_rect(0, size - border, size, size, 0);
        img.fill_rect(0, 0, border, size, 0);
        img.fill_rect(size - border, 0, size, size, 0);
        img
    }

    #[test]
    fn solid_cell_has_no_border() {
        let img = Image::filled(20, 20, 1, 240);
        let b = BBox { x1: 2, y1: 2, x2: 18, y2: 18 };
        assert_eq!(estimate_bg(&img, &b), 240);
        let th = edge_thickness(&img, &b, 240);
        assert_eq!(th, (0, 0, 0, 0));
        assert_eq!(inner_region(&b, th).unwrap(), BBox { x1: 3, y1: 3, x2: 17, y2: 17 });
    }

    #[test]
    fn two_pixel_border() {
        let img = bordered(20, 2);
        let b = BBox { x1: 0, y1: 0, x2: 20, y2: 20 };
        let bg = estimate_bg(&img, &b);
        assert_eq!(bg, 200);
        assert_eq!(edge_thickness(&img, &b, bg), (2, 2, 2, 2));
    }

    #[test]
    fn degenerate_box_unusable() {
        let b = BBox { x1: 4, y1: 4, x2: 5, y2: 5 };
        assert!(matches!(inner_region(&b, (0, 0, 0, 0)), Err(Error::Unusable(_))));
    }

    #[test]
    fn fit_cases() {
        let inner = BBox { x1: 0, y1: 0, x2: 40, y2: 20 };
        assert_eq!(fit_text("", 3, '~', &inner).unwrap(), FitText { scale: 1, text: String::new(), truncated: false });
        assert_eq!(fit_text("ab", 3, '~', &inner).unwrap().scale, 2);
        let f = fit_text("abcdefghij", 3, '~', &inner).unwrap();
        assert!(f.truncated);
        assert_eq!(f.text, "abcde~");
        assert!(fit_text("a", 1, '~', &BBox { x1: 0, y1: 0, x2: 4, y2: 4 }).is_none());
    }

    #[test]
    fn one_cell_box_is_measured_ink() {
        let t = Table::from_texts(1, 1, &["Hi"]).unwrap();
        let r = render_sample(&t, &RenderStyle::default(), QuantSpec::new(1).unwrap(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let b = r.table.cells()[0].bbox.unwrap();
        let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
        // Ink inside the rulings is the text.
        for y in 4..60 {
            for x in 4..124 {
                if r.image.at(y, x) == 0 {
                    (x1, y1, x2, y2) = (x1.min(x), y1.min(y), x2.max(x + 1), y2.max(y + 1));
                }
            }
        }
        assert_eq!(b, BBox { x1: x1 as u32, y1: y1 as u32, x2: x2 as u32, y2: y2 as u32 });
        assert_eq!(r.h_rules.len(), 2);
        assert_eq!(r.v_rules.len(), 2);
    }

    #[test]
    fn deterministic_and_parseable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let style = RenderStyle { jitter: 0.2, ..RenderStyle::default() };
        for _ in 0..50 {
            let t = super::super::random_table(&mut rng, 1..=4, 1..=4, 3);
            let seed = rng.gen();
            let a = render_sample(&t, &style, QuantSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = render_sample(&t, &style, QuantSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a.image, b.image);
            let parsed = parse_markup(&a.markup, QuantSpec::default()).unwrap();
            assert_eq!((parsed.rows(), parsed.cols()), (t.rows(), t.cols()));
            for c in a.table.cells() {
                let bb = c.bbox.unwrap();
                assert!(bb.x2 as usize <= 128 && bb.y2 as usize <= 64);
            }
        }
    }
}
