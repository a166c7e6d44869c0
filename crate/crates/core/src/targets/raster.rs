use serde::{Deserialize, Serialize};

use super::boundaries::Boundaries;

/// Ridge widths in full-resolution pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub sigma_line: f64,
    pub sigma_corner: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { sigma_line: 1.5, sigma_corner: 2.0 }
    }
}

/// Row, column and corner fields, each `height x width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StructMaps {
    pub height: usize,
    pub width: usize,
    pub rows: Vec<f32>,
    pub cols: Vec<f32>,
    pub corners: Vec<f32>,
    pub sigma_line: f64,
    pub sigma_corner: f64,
}

impl StructMaps {
    pub fn channels(&self) -> [&[f32]; 3] {
        [&self.rows, &self.cols, &self.corners]
    }

    /// Channel-major `3 x H x W` copy.
    pub fn to_chw(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(3 * self.rows.len());
        for ch in self.channels() {
            out.extend_from_slice(ch);
        }
        out
    }

    pub fn from_chw(height: usize, width: usize, data: &[f32]) -> Self {
        let n = height * width;
        assert_eq!(data.len(), 3 * n, "expected 3 x {height} x {width} values");
        StructMaps {
            height,
            width,
            rows: data[..n].to_vec(),
            cols: data[n..2 * n].to_vec(),
            corners: data[2 * n..].to_vec(),
            sigma_line: f64::NAN,
            sigma_corner: f64::NAN,
        }
    }
}

fn ridge(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Gaussian ridges along every active separator segment, plus corners.
///
/// A row boundary contributes at column slot `c` only where the owners
/// above and below differ, over that column's pixel range. Corners are the
/// Gaussian-blurred product of the row and column fields.
pub fn rasterize(b: &Boundaries, height: usize, width: usize, cfg: &RidgeConfig) -> StructMaps {
    let mut rows = vec![0f32; height * width];
    let mut cols = vec![0f32; height * width];

    // active[x] lists the row boundaries drawn at column pixel x.
    let mut active_at_x: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (k, &y) in b.row_y.iter().enumerate() {
        for (c, &on) in b.h_sep[k].iter().enumerate() {
            if on {
                let (lo, hi) = b.col_range(c);
                for list in active_at_x.iter_mut().take((hi as usize + 1).min(width)).skip(lo as usize) {
                    if !list.contains(&(y as f64)) {
                        list.push(y as f64);
                    }
                }
            }
        }
    }
    let mut active_at_y: Vec<Vec<f64>> = vec![Vec::new(); height];
    for (k, &x) in b.col_x.iter().enumerate() {
        for (r, seps) in b.v_sep.iter().enumerate() {
            if seps[k] {
                let (lo, hi) = b.row_range(r);
                for list in active_at_y.iter_mut().take((hi as usize + 1).min(height)).skip(lo as usize) {
                    if !list.contains(&(x as f64)) {
                        list.push(x as f64);
                    }
                }
            }
        }
    }
    for y in 0..height {
        for x in 0..width {
            let rv = active_at_x[x].iter().map(|&yk| ridge(y as f64 - yk, cfg.sigma_line)).fold(0.0, f64::max);
            let cv = active_at_y[y].iter().map(|&xk| ridge(x as f64 - xk, cfg.sigma_line)).fold(0.0, f64::max);
            rows[y * width + x] = rv.clamp(0.0, 1.0) as f32;
            cols[y * width + x] = cv.clamp(0.0, 1.0) as f32;
        }
    }

    let product: Vec<f64> = rows.iter().zip(&cols).map(|(&r, &c)| r as f64 * c as f64).collect();
    let corners = gaussian_blur(&product, height, width, cfg.sigma_corner)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    StructMaps { height, width, rows, cols, corners, sigma_line: cfg.sigma_line, sigma_corner: cfg.sigma_corner }
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|i| ridge(i as f64, sigma)).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable blur with zero padding outside the field.
fn gaussian_blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &g) in k.iter().enumerate() {
                let xx = x as i64 + t as i64 - r;
                if (0..w as i64).contains(&xx) {
                    acc += g * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &g) in k.iter().enumerate() {
                let yy = y as i64 + t as i64 - r;
                if (0..h as i64).contains(&yy) {
                    acc += g * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Per-axis area weights: `out[i] = sum_j m[i][j] * in[j]`.
pub(crate) fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < n_in {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((j, overlap / scale));
                }
                j += 1;
            }
            taps
        })
        .collect()
}

/// Area-average resampling of one field.
pub(crate) fn area_resize(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let wy = area_weights(h, out_h);
    let wx = area_weights(w, out_w);
    let mut tmp = vec![0.0f64; h * out_w];
    for y in 0..h {
        for (x, taps) in wx.iter().enumerate() {
            tmp[y * out_w + x] = taps.iter().map(|&(j, a)| a * src[y * w + j] as f64).sum();
        }
    }
    let mut out = vec![0f32; out_h * out_w];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..out_w {
            let v: f64 = taps.iter().map(|&(j, a)| a * tmp[j * out_w + x]).sum();
            out[y * out_w + x] = v.clamp(0.0, 1.0) as f32;
        }
    }
    out
}

/// Area-average downsampling of all three channels.
pub fn downsample_targets(maps: &StructMaps, out_h: usize, out_w: usize) -> StructMaps {
    let f = |ch: &[f32]| area_resize(ch, maps.height, maps.width, out_h, out_w);
    StructMaps {
        height: out_h,
        width: out_w,
        rows: f(&maps.rows),
        cols: f(&maps.cols),
        corners: f(&maps.corners),
        sigma_line: maps.sigma_line,
        sigma_corner: maps.sigma_corner,
    }
}
