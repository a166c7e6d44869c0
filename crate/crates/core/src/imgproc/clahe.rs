//! Contrast-limited adaptive histogram equalization.

use crate::error::{Error, Result};
use crate::image::Image;

/// Tile `i` of `n` over `len` pixels covers `[i*len/n, (i+1)*len/n)`.
fn bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

/// Clip-limited equalization LUT of one tile histogram.
///
/// Counts above `clip * area / 256` (at least 1) are cut and spread evenly
/// over all bins. A tile holding a single gray level maps to itself.
fn tile_lut(hist: &[u32; 256], area: u32, clip: f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        for (v, l) in lut.iter_mut().enumerate() {
            *l = v as u8;
        }
        return lut;
    }
    let mut h = hist.map(|c| c as f64);
    if clip.is_finite() {
        let limit = (clip * area as f64 / 256.0).max(1.0);
        let mut excess = 0.0;
        for c in &mut h {
            if *c > limit {
                excess += *c - limit;
                *c = limit;
            }
        }
        let share = excess / 256.0;
        for c in &mut h {
            *c += share;
        }
    }
    let mut cdf = 0.0;
    for (v, c) in h.iter().enumerate() {
        cdf += c;
        lut[v] = (cdf * 255.0 / area as f64).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Interpolation stencil along one axis: `(lo, hi, weight of hi)` per pixel,
/// between the two nearest tile centres.
fn stencil(len: usize, tiles: &[(usize, usize)]) -> Vec<(usize, usize, f64)> {
    let centres: Vec<f64> = tiles.iter().map(|&(a, b)| (a + b) as f64 / 2.0 - 0.5).collect();
    let last = centres.len() - 1;
    (0..len)
        .map(|p| {
            let p = p as f64;
            if p <= centres[0] {
                (0, 0, 0.0)
            } else if p >= centres[last] {
                (last, last, 0.0)
            } else {
                let i = centres.iter().rposition(|&c| c <= p).unwrap();
                (i, i + 1, (p - centres[i]) / (centres[i + 1] - centres[i]))
            }
        })
        .collect()
}

/// CLAHE on a gray image with a `tiles = (rows, cols)` grid; `clip = inf`
/// disables clipping. Tile counts are capped at the image size.
pub fn clahe(gray: &Image, clip: f64, tiles: (usize, usize)) -> Result<Image> {
    if gray.channels != 1 {
        return Err(Error::ShapeMismatch("clahe expects a gray image".into()));
    }
    if !(clip > 0.0) || tiles.0 == 0 || tiles.1 == 0 {
        return Err(Error::InvalidConfig(format!("clahe needs clip > 0 and tiles >= 1, got {clip}, {tiles:?}")));
    }
    let (h, w) = (gray.height, gray.width);
    if h == 0 || w == 0 {
        return Ok(gray.clone());
    }
    let ty = bounds(h, tiles.0.min(h));
    let tx = bounds(w, tiles.1.min(w));
    let mut luts = Vec::with_capacity(ty.len() * tx.len());
    for &(y0, y1) in &ty {
        for &(x0, x1) in &tx {
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[gray.at(y, x) as usize] += 1;
                }
            }
            luts.push(tile_lut(&hist, ((y1 - y0) * (x1 - x0)) as u32, clip));
        }
    }
    let sy = stencil(h, &ty);
    let sx = stencil(w, &tx);
    let nx = tx.len();
    let mut out = gray.clone();
    for (y, &(i0, i1, wy)) in sy.iter().enumerate() {
        for (x, &(j0, j1, wx)) in sx.iter().enumerate() {
            let v = gray.at(y, x) as usize;
            let l = |i: usize, j: usize| luts[i * nx + j][v] as f64;
            let top = l(i0, j0) * (1.0 - wx) + l(i0, j1) * wx;
            let bot = l(i1, j0) * (1.0 - wx) + l(i1, j1) * wx;
            out.set(y, x, (top * (1.0 - wy) + bot * wy).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}
