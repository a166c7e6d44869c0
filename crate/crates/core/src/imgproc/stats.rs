//! Per-channel normalization statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::Scalar;
use crate::table::AnnotationRecord;

/// Per-channel mean and standard deviation of pixel values scaled to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s: NormStats = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if s.mean.len() != s.std.len() {
            return Err(Error::Format("mean and std lengths differ".into()));
        }
        if let Some(c) = s.std.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::StatDegenerate { channel: c });
        }
        Ok(s)
    }
}

/// Population statistics over all pixels of `images` (two passes), which
/// must share a channel count.
pub fn compute_stats(images: &[Image]) -> Result<NormStats> {
    let Some(first) = images.first() else {
        return Err(Error::Unusable("no images to compute statistics from".into()));
    };
    let ch = first.channels;
    if let Some(bad) = images.iter().find(|i| i.channels != ch) {
        return Err(Error::ShapeMismatch(format!("mixed channel counts {ch} and {}", bad.channels)));
    }
    let count = images.iter().map(|i| i.data.len() / ch).sum::<usize>() as f64;
    if count == 0.0 {
        return Err(Error::Unusable("no pixels to compute statistics from".into()));
    }
    let mut mean = vec![0.0; ch];
    for img in images {
        for (i, &v) in img.data.iter().enumerate() {
            mean[i % ch] += v as f64 / 255.0;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; ch];
    for img in images {
        for (i, &v) in img.data.iter().enumerate() {
            let d = v as f64 / 255.0 - mean[i % ch];
            var[i % ch] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
    if let Some(c) = std.iter().position(|&s| s == 0.0) {
        return Err(Error::StatDegenerate { channel: c });
    }
    Ok(NormStats { mean, std })
}

/// Statistics over the images of records tagged `split` (records without a
/// split count as `train`). Image paths are relative to `base`.
pub fn compute_stats_from_manifest(records: &[AnnotationRecord], base: impl AsRef<Path>, split: &str) -> Result<NormStats> {
    let images = records
        .iter()
        .filter(|r| r.split.as_deref().unwrap_or("train") == split)
        .map(|r| Image::read_pnm(base.as_ref().join(&r.image)))
        .collect::<Result<Vec<_>>>()?;
    compute_stats(&images)
}

/// `(I / 255 - mean_c) / std_c`, returned channel-major (`C x H x W`).
pub fn normalize<T: Scalar>(img: &Image, stats: &NormStats) -> Result<Vec<T>> {
    if stats.channels() != img.channels || stats.std.len() != img.channels {
        return Err(Error::ShapeMismatch(format!("{}-channel stats for a {}-channel image", stats.channels(), img.channels)));
    }
    if let Some(c) = stats.std.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::StatDegenerate { channel: c });
    }
    let plane = img.height * img.width;
    let mut out = vec![T::zero(); img.data.len()];
    for (i, &v) in img.data.iter().enumerate() {
        let c = i % img.channels;
        out[c * plane + i / img.channels] = T::of((v as f64 / 255.0 - stats.mean[c]) / stats.std[c]);
    }
    Ok(out)
}
