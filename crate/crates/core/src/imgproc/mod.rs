//! Document enhancement (illumination, CLAHE, unsharp masking, optional
//! smoothing) and dataset normalization.

mod clahe;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub use clahe::clahe;
pub use stats::{compute_stats, compute_stats_from_manifest, normalize, NormStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceConfig {
    pub illum_correction: bool,
    pub clahe_clip: f64,
    /// Tile grid `(rows, cols)`.
    pub clahe_tiles: (usize, usize),
    pub unsharp_amount: f64,
    pub unsharp_sigma: f64,
    /// Gaussian smoothing sigma; `None` disables the step.
    pub denoise: Option<f64>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            illum_correction: true,
            clahe_clip: 2.0,
            clahe_tiles: (8, 8),
            unsharp_amount: 0.5,
            unsharp_sigma: 1.0,
            denoise: None,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clahe_clip > 0.0) {
            return Err(Error::InvalidConfig(format!("clahe_clip must be > 0, got {}", self.clahe_clip)));
        }
        if self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return Err(Error::InvalidConfig("clahe_tiles must be at least 1x1".into()));
        }
        if !(self.unsharp_sigma >= 0.0) || !self.unsharp_amount.is_finite() {
            return Err(Error::InvalidConfig("unsharp parameters must be finite and sigma >= 0".into()));
        }
        if let Some(s) = self.denoise {
            if !(s >= 0.0) {
                return Err(Error::InvalidConfig(format!("denoise strength must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// Full pipeline: illumination correction, CLAHE, unsharp mask, optional
/// smoothing. RGB images are processed on BT.601 luma and the luma change is
/// added back to every channel.
pub fn enhance(img: &Image, cfg: &EnhanceConfig) -> Result<Image> {
    cfg.validate()?;
    let luma = img.to_gray();
    let mut y = luma.clone();
    if cfg.illum_correction {
        y = illum_correct(&y);
    }
    y = clahe(&y, cfg.clahe_clip, cfg.clahe_tiles)?;
    y = unsharp(&y, cfg.unsharp_amount, cfg.unsharp_sigma);
    if let Some(s) = cfg.denoise {
        y = denoise(&y, s);
    }
    if img.channels == 1 {
        return Ok(y);
    }
    let mut out = img.clone();
    for (i, px) in out.data.chunks_mut(3).enumerate() {
        let delta = y.data[i] as i32 - luma.data[i] as i32;
        for v in px {
            *v = (*v as i32 + delta).clamp(0, 255) as u8;
        }
    }
    Ok(out)
}

/// Side of the square structuring element: `max(3, round(0.02 min(H, W)))`,
/// bumped to the next odd number.
pub fn illum_kernel_side(height: usize, width: usize) -> usize {
    let k = ((0.02 * height.min(width) as f64).round() as usize).max(3);
    k | 1
}

/// Flattens uneven illumination on a gray image.
///
/// The background is a grayscale closing (an opening of the inverted image,
/// since text is dark on light paper). The output is `I / bg * max(bg)`,
/// clipped to `[0, 255]`, so a constant image maps to itself.
pub fn illum_correct(gray: &Image) -> Image {
    assert_eq!(gray.channels, 1, "illum_correct expects a gray image");
    if gray.data.is_empty() {
        return gray.clone();
    }
    let k = illum_kernel_side(gray.height, gray.width);
    let (h, w) = (gray.height, gray.width);
    let dilated = morph(&gray.data, h, w, k, u8::max);
    let bg = morph(&dilated, h, w, k, u8::min);
    let top = *bg.iter().max().unwrap() as f64;
    let data = gray
        .data
        .iter()
        .zip(&bg)
        .map(|(&v, &b)| if b == 0 { v } else { (v as f64 / b as f64 * top).round().clamp(0.0, 255.0) as u8 })
        .collect();
    Image { data, ..gray.clone() }
}

/// Separable flat `k x k` min or max filter with edge replication.
fn morph(src: &[u8], h: usize, w: usize, k: usize, pick: fn(u8, u8) -> u8) -> Vec<u8> {
    let r = k / 2;
    let mut tmp = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
            tmp[y * w + x] = src[y * w + lo..=y * w + hi].iter().copied().reduce(pick).unwrap();
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| tmp[yy * w + x]).reduce(pick).unwrap();
        }
    }
    out
}

/// Normalized Gaussian kernel of radius `ceil(3 sigma)`.
fn gaussian(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with edge replication, in floating point.
pub fn gaussian_blur(gray: &Image, sigma: f64) -> Vec<f64> {
    let (h, w) = (gray.height, gray.width);
    let src: Vec<f64> = gray.data.iter().step_by(gray.channels).map(|&v| v as f64).collect();
    if sigma <= 0.0 || src.is_empty() {
        return src;
    }
    let k = gaussian(sigma);
    let r = (k.len() / 2) as i64;
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k.iter().enumerate().map(|(j, kv)| kv * src[y * w + clampi(x as i64 + j as i64 - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k.iter().enumerate().map(|(j, kv)| kv * tmp[clampi(y as i64 + j as i64 - r, h) * w + x]).sum();
        }
    }
    out
}

/// `(1 + amount) I - amount * blur(I)`, rounded and clipped.
pub fn unsharp(gray: &Image, amount: f64, sigma: f64) -> Image {
    assert_eq!(gray.channels, 1, "unsharp expects a gray image");
    if amount == 0.0 {
        return gray.clone();
    }
    let blur = gaussian_blur(gray, sigma);
    let data = gray
        .data
        .iter()
        .zip(&blur)
        .map(|(&v, &b)| ((1.0 + amount) * v as f64 - amount * b).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image { data, ..gray.clone() }
}

/// Gaussian smoothing with `sigma = strength`.
pub fn denoise(gray: &Image, strength: f64) -> Image {
    let data = gaussian_blur(gray, strength).into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    Image { data, channels: 1, ..gray.clone() }
}
