//! Structure-head maps to a per-key cross-attention bias.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the entropy confidence is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfResolution {
    /// After resizing to the encoder grid.
    #[default]
    Encoder,
    /// On the raw structure-head maps.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub clamp: f64,
    pub eps_std: f64,
    pub conf_at: ConfResolution,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { alpha: 1.0, beta: 1.0, gamma: 1.0, lambda0: 1.0, clamp: 5.0, eps_std: 1e-6, conf_at: ConfResolution::Encoder }
    }
}

impl BiasConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clamp > 0.0) {
            return Err(Error::InvalidConfig(format!("keybias.clamp must be > 0, got {}", self.clamp)));
        }
        if !(self.eps_std > 0.0) {
            return Err(Error::InvalidConfig(format!("keybias.eps_std must be > 0, got {}", self.eps_std)));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("lambda0", self.lambda0)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("keybias.{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Per-key logit offsets for an `h x w` encoder grid, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyBias {
    pub values: Vec<f64>,
    pub conf: f64,
    pub height: usize,
    pub width: usize,
}

/// A single-channel `h x w` field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width);
        Field { height, width, data }
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        Field::new(height, width, vec![v; height * width])
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Corner-aligned sample position of output index `i` in a source axis.
fn source_pos(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Bilinear resize with corner-aligned sampling.
pub fn resize_bilinear(src: &Field, out_h: usize, out_w: usize) -> Field {
    if (out_h, out_w) == (src.height, src.width) {
        return src.clone();
    }
    let mut data = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let fy = source_pos(i, src.height, out_h);
        let y0 = (fy.floor() as usize).min(src.height - 1);
        let y1 = (y0 + 1).min(src.height - 1);
        let ty = fy - y0 as f64;
        for j in 0..out_w {
            let fx = source_pos(j, src.width, out_w);
            let x0 = (fx.floor() as usize).min(src.width - 1);
            let x1 = (x0 + 1).min(src.width - 1);
            let tx = fx - x0 as f64;
            let top = src.at(y0, x0) * (1.0 - tx) + src.at(y0, x1) * tx;
            let bot = src.at(y1, x0) * (1.0 - tx) + src.at(y1, x1) * tx;
            data.push(top * (1.0 - ty) + bot * ty);
        }
    }
    Field::new(out_h, out_w, data)
}

/// Row profile of `p_r` (max over x, broadcast along x) and column profile
/// of `p_c` (max over y, broadcast along y).
pub fn axis_profiles(p_r: &Field, p_c: &Field) -> (Field, Field) {
    let mut r = Field::filled(p_r.height, p_r.width, 0.0);
    for y in 0..p_r.height {
        let m = p_r.data[y * p_r.width..(y + 1) * p_r.width].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        r.data[y * p_r.width..(y + 1) * p_r.width].fill(m);
    }
    let mut c = Field::filled(p_c.height, p_c.width, 0.0);
    for x in 0..p_c.width {
        let m = (0..p_c.height).map(|y| p_c.at(y, x)).fold(f64::NEG_INFINITY, f64::max);
        for y in 0..p_c.height {
            c.data[y * p_c.width + x] = m;
        }
    }
    (r, c)
}

/// Binary entropy in bits, with `H(0) = H(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

/// One minus the mean binary entropy over the three maps, clipped to [0,1].
pub fn entropy_confidence(p_r: &Field, p_c: &Field, p_cor: &Field) -> f64 {
    let n = p_r.data.len() + p_c.data.len() + p_cor.data.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = [p_r, p_c, p_cor].iter().flat_map(|f| f.data.iter()).map(|&p| binary_entropy(p)).sum();
    (1.0 - total / n as f64).clamp(0.0, 1.0)
}

/// Population z-score; a (near-)constant field maps to zeros.
pub fn zscore(values: &[f64], eps_std: f64) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < eps_std {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Structure logits `3 x h_s x w_s` (rows, cols, corners) to a key bias on
/// the `h_f x w_f` encoder grid.
pub fn compute_bias<L: Copy + Into<f64>>(logits: &[L], head_hw: (usize, usize), cfg: &BiasConfig, encoder_hw: (usize, usize)) -> Result<KeyBias> {
    cfg.validate()?;
    let (hs, ws) = head_hw;
    let (hf, wf) = encoder_hw;
    if logits.len() != 3 * hs * ws {
        return Err(Error::ShapeMismatch(format!("expected 3x{hs}x{ws} logits, got {}", logits.len())));
    }
    if let Some(bad) = logits.iter().map(|&v| v.into()).find(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("structure logit {bad}")));
    }
    let probs: Vec<Field> = (0..3)
        .map(|k| Field::new(hs, ws, logits[k * hs * ws..(k + 1) * hs * ws].iter().map(|&v| sigmoid(v.into())).collect()))
        .collect();
    let resized: Vec<Field> = probs.iter().map(|p| resize_bilinear(p, hf, wf)).collect();
    let (r, c) = axis_profiles(&resized[0], &resized[1]);
    let b: Vec<f64> = (0..hf * wf)
        .map(|i| cfg.alpha * r.data[i] + cfg.beta * c.data[i] + cfg.gamma * resized[2].data[i])
        .collect();
    let conf = match cfg.conf_at {
        ConfResolution::Encoder => entropy_confidence(&resized[0], &resized[1], &resized[2]),
        ConfResolution::Head => entropy_confidence(&probs[0], &probs[1], &probs[2]),
    };
    let scale = cfg.lambda0 * conf;
    let values = zscore(&b, cfg.eps_std).into_iter().map(|z| (scale * z).clamp(-cfg.clamp, cfg.clamp)).collect();
    Ok(KeyBias { values, conf, height: hf, width: wf })
}
