//! The micro image-to-sequence model.
//!
//! Encoder: three strided SiLU convolutions reach an `H/16 x W/8` grid,
//! tokens get 2D RoPE and pass through pre-LN transformer encoder layers.
//! A structure head reads the conv grid, upsamples it 2x along rows and
//! predicts row/column/corner logits at `H/8 x W/8`. The decoder is a stack
//! of pre-LN layers (causal self-attention, key-biased cross-attention,
//! SiLU feed-forward) with `n` parallel next-token heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keybias::{compute_bias, BiasConfig, KeyBias};

use super::kernels::{self, AttnShape, ConvGeom};
use super::scalar::Scalar;
use super::tape::{Graph, ParamId, ParamStore, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub head_channels: usize,
    pub vocab: usize,
    pub max_len: usize,
    /// Number of parallel next-token heads; head `i` predicts offset `i`.
    pub mtp_heads: usize,
    pub rope_base: f64,
    pub use_keybias: bool,
    pub keybias: BiasConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_h: 64,
            image_w: 128,
            conv1: 8,
            conv2: 16,
            d_model: 64,
            heads: 4,
            ffn: 128,
            enc_layers: 1,
            dec_layers: 2,
            head_channels: 16,
            vocab: crate::tokenize::Vocab::default().len(),
            max_len: 512,
            mtp_heads: 1,
            rope_base: 100.0,
            use_keybias: true,
            keybias: BiasConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.image_h == 0 || self.image_h % 16 != 0 || self.image_w == 0 || self.image_w % 8 != 0 {
            return bad(format!("image size {}x{} must be a multiple of 16x8", self.image_h, self.image_w));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.heads));
        }
        if self.d_model % 4 != 0 {
            return bad("d_model must be divisible by 4 for 2D RoPE".into());
        }
        if self.mtp_heads == 0 {
            return bad("mtp_heads must be at least 1".into());
        }
        if self.vocab < 4 || self.max_len < 2 {
            return bad("vocabulary or max_len too small".into());
        }
        self.keybias.validate()
    }

    /// Encoder token grid `(H/16, W/8)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.image_h / 16, self.image_w / 8)
    }

    /// Structure-head grid `(H/8, W/8)`.
    pub fn head_grid(&self) -> (usize, usize) {
        (self.image_h / 8, self.image_w / 8)
    }

    fn conv_geoms(&self) -> [ConvGeom; 3] {
        let (h, w) = (self.image_h, self.image_w);
        [
            ConvGeom { c_in: 1, h, w, kh: 3, kw: 3, sh: 2, sw: 2, ph: 1, pw: 1 },
            ConvGeom { c_in: self.conv1, h: h / 2, w: w / 2, kh: 3, kw: 3, sh: 2, sw: 2, ph: 1, pw: 1 },
            ConvGeom { c_in: self.conv2, h: h / 4, w: w / 4, kh: 5, kw: 3, sh: 4, sw: 2, ph: 2, pw: 1 },
        ]
    }

    fn head_geoms(&self) -> [ConvGeom; 2] {
        let (hf, wf) = self.grid();
        [
            ConvGeom { c_in: self.d_model, h: hf, w: wf, kh: 3, kw: 3, sh: 1, sw: 1, ph: 1, pw: 1 },
            ConvGeom { c_in: self.head_channels, h: 2 * hf, w: wf, kh: 3, kw: 3, sh: 1, sw: 1, ph: 1, pw: 1 },
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Lin {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    q: Lin,
    k: Lin,
    v: Lin,
    o: Lin,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    up: Lin,
    down: Lin,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct Ids {
    conv: [Lin; 3],
    head: [Lin; 2],
    enc: Vec<EncLayer>,
    enc_ln: Norm,
    tok_emb: ParamId,
    pos_emb: ParamId,
    dec: Vec<DecLayer>,
    dec_ln: Norm,
    out: Vec<Lin>,
}

struct Init<'a, T: Scalar> {
    params: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Init<'_, T> {
    fn xavier(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let t = Tensor::uniform(shape, bound, &mut self.rng);
        self.params.add(name, t)
    }

    fn lin(&mut self, name: &str, i: usize, o: usize) -> Lin {
        let w = self.xavier(&format!("{name}.w"), &[i, o], i, o);
        let b = self.params.add(format!("{name}.b"), Tensor::zeros(&[o]));
        Lin { w, b }
    }

    fn conv(&mut self, name: &str, c_out: usize, g: &ConvGeom) -> Lin {
        let w = self.xavier(&format!("{name}.w"), &[c_out, g.patch()], g.patch(), c_out * g.kh * g.kw);
        let b = self.params.add(format!("{name}.b"), Tensor::zeros(&[c_out]));
        Lin { w, b }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        let g = self.params.add(format!("{name}.g"), Tensor::filled(&[d], T::one()));
        let b = self.params.add(format!("{name}.b"), Tensor::zeros(&[d]));
        Norm { g, b }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            q: self.lin(&format!("{name}.q"), d, d),
            k: self.lin(&format!("{name}.k"), d, d),
            v: self.lin(&format!("{name}.v"), d, d),
            o: self.lin(&format!("{name}.o"), d, d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, f: usize) -> Ffn {
        Ffn { up: self.lin(&format!("{name}.up"), d, f), down: self.lin(&format!("{name}.down"), f, d) }
    }

    fn embedding(&mut self, name: &str, n: usize, d: usize) -> ParamId {
        let t = Tensor::uniform(&[n, d], 0.1, &mut self.rng);
        self.params.add(name, t)
    }
}

/// Model parameters plus the layout needed to run them.
#[derive(Debug, Clone)]
pub struct MicroModel<T: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    ids: Ids,
}

/// Graph handles produced by the encoder.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    /// `T_k x d` encoder memory.
    pub memory: Var,
    /// `3 x H/8 x W/8` structure logits.
    pub head_logits: Var,
}

/// Loss handles of one teacher-forced sample.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    /// Cross-entropy of the first (next-token) head.
    pub seq: Var,
    /// Weighted sum over all heads; equals `seq` with one head.
    pub mtp: Var,
    pub prior: Var,
    pub total: Var,
}

/// Everything the decoder needs from one image, without a tape.
#[derive(Debug, Clone)]
pub struct EncodedImage<T> {
    pub memory: Vec<T>,
    pub tk: usize,
    pub head_logits: Vec<T>,
    pub bias: Option<KeyBias>,
    bias_t: Option<Vec<T>>,
    cross_k: Vec<Vec<T>>,
    cross_v: Vec<Vec<T>>,
}

/// Self-attention keys and values of the tokens decoded so far.
#[derive(Debug, Clone)]
pub struct KvCache<T> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    len: usize,
}

impl<T> KvCache<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl<T: Scalar> MicroModel<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init { params: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let d = cfg.d_model;
        let geoms = cfg.conv_geoms();
        let conv = [
            init.conv("enc.conv1", cfg.conv1, &geoms[0]),
            init.conv("enc.conv2", cfg.conv2, &geoms[1]),
            init.conv("enc.conv3", d, &geoms[2]),
        ];
        let hg = cfg.head_geoms();
        let head = [init.conv("head.conv1", cfg.head_channels, &hg[0]), init.conv("head.conv2", 3, &hg[1])];
        let enc = (0..cfg.enc_layers)
            .map(|l| EncLayer {
                ln1: init.norm(&format!("enc.{l}.ln1"), d),
                attn: init.attn(&format!("enc.{l}.attn"), d),
                ln2: init.norm(&format!("enc.{l}.ln2"), d),
                ffn: init.ffn(&format!("enc.{l}.ffn"), d, cfg.ffn),
            })
            .collect();
        let enc_ln = init.norm("enc.ln", d);
        let tok_emb = init.embedding("dec.tok_emb", cfg.vocab, d);
        let pos_emb = init.embedding("dec.pos_emb", cfg.max_len, d);
        let dec = (0..cfg.dec_layers)
            .map(|l| DecLayer {
                ln1: init.norm(&format!("dec.{l}.ln1"), d),
                self_attn: init.attn(&format!("dec.{l}.self"), d),
                ln2: init.norm(&format!("dec.{l}.ln2"), d),
                cross: init.attn(&format!("dec.{l}.cross"), d),
                ln3: init.norm(&format!("dec.{l}.ln3"), d),
                ffn: init.ffn(&format!("dec.{l}.ffn"), d, cfg.ffn),
            })
            .collect();
        let dec_ln = init.norm("dec.ln", d);
        let out = (0..cfg.mtp_heads).map(|i| init.lin(&format!("dec.out{}", i + 1), d, cfg.vocab)).collect();
        let ids = Ids { conv, head, enc, enc_ln, tok_emb, pos_emb, dec, dec_ln, out };
        Ok(MicroModel { cfg, params, ids })
    }

    /// Same architecture with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> MicroModel<U> {
        MicroModel { cfg: self.cfg.clone(), params: self.params.cast(), ids: self.ids.clone() }
    }

    /// Replaces the parameter values, keeping the layout.
    pub fn set_params(&mut self, params: ParamStore<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!("{} parameters, expected {}", params.len(), self.params.len())));
        }
        for (id, (name, t)) in self.params.iter().enumerate() {
            if params.name(id) != name || params.get(id).shape != t.shape {
                return Err(Error::ShapeMismatch(format!("parameter {name} does not match")));
            }
        }
        self.params = params;
        Ok(())
    }

    fn lin(&self, g: &mut Graph<T>, x: Var, l: Lin) -> Var {
        let (w, b) = (g.param(l.w), g.param(l.b));
        g.linear(x, w, Some(b))
    }

    fn norm(&self, g: &mut Graph<T>, x: Var, n: Norm) -> Var {
        let (gm, b) = (g.param(n.g), g.param(n.b));
        g.layer_norm(x, gm, b)
    }

    fn conv(&self, g: &mut Graph<T>, x: Var, l: Lin, geom: ConvGeom) -> Var {
        let (w, b) = (g.param(l.w), g.param(l.b));
        g.conv2d(x, w, b, geom)
    }

    fn attn(&self, g: &mut Graph<T>, xq: Var, xkv: Var, a: Attn, causal: bool, bias: Option<&[T]>) -> Var {
        let q = self.lin(g, xq, a.q);
        let k = self.lin(g, xkv, a.k);
        let v = self.lin(g, xkv, a.v);
        let o = g.attention(q, k, v, self.cfg.heads, causal, bias);
        self.lin(g, o, a.o)
    }

    fn ffn(&self, g: &mut Graph<T>, x: Var, f: Ffn) -> Var {
        let h = self.lin(g, x, f.up);
        let h = g.silu(h);
        self.lin(g, h, f.down)
    }

    /// Encoder and structure head on a normalized `H x W` image.
    pub fn encode(&self, g: &mut Graph<T>, image: &[T]) -> Result<EncoderVars> {
        let (h, w) = (self.cfg.image_h, self.cfg.image_w);
        if image.len() != h * w {
            return Err(Error::ShapeMismatch(format!("image has {} pixels, model expects {h}x{w}", image.len())));
        }
        let geoms = self.cfg.conv_geoms();
        let mut x = g.input(Tensor::new(&[1, h, w], image.to_vec()));
        for (l, geom) in self.ids.conv.iter().zip(geoms) {
            let c = self.conv(g, x, *l, geom);
            x = g.silu(c);
        }
        let hg = self.cfg.head_geoms();
        let s = self.conv(g, x, self.ids.head[0], hg[0]);
        let s = g.silu(s);
        let s = g.upsample_rows2(s);
        let head_logits = self.conv(g, s, self.ids.head[1], hg[1]);

        let (hf, wf) = self.cfg.grid();
        let tokens = g.transpose(x);
        let mut t = g.rope2d(tokens, hf, wf, self.cfg.rope_base);
        for layer in &self.ids.enc {
            let a = self.norm(g, t, layer.ln1);
            let a = self.attn(g, a, a, layer.attn, false, None);
            t = g.add(t, a);
            let f = self.norm(g, t, layer.ln2);
            let f = self.ffn(g, f, layer.ffn);
            t = g.add(t, f);
        }
        let memory = self.norm(g, t, self.ids.enc_ln);
        Ok(EncoderVars { memory, head_logits })
    }

    /// Key bias from (detached) structure logits, if enabled.
    pub fn key_bias(&self, head_logits: &[T]) -> Result<Option<KeyBias>> {
        if !self.cfg.use_keybias {
            return Ok(None);
        }
        let logits: Vec<f64> = head_logits.iter().map(|v| v.to_f64().unwrap()).collect();
        compute_bias(&logits, self.cfg.head_grid(), &self.cfg.keybias, self.cfg.grid()).map(Some)
    }

    /// Teacher-forced decoder; returns `len(inputs) x V` logits per head.
    pub fn decode_train(&self, g: &mut Graph<T>, memory: Var, bias: Option<&[T]>, inputs: &[u32]) -> Result<Vec<Var>> {
        if inputs.is_empty() || inputs.len() > self.cfg.max_len {
            return Err(Error::ShapeMismatch(format!("decoder input length {} outside 1..={}", inputs.len(), self.cfg.max_len)));
        }
        if let Some(&bad) = inputs.iter().find(|&&t| t as usize >= self.cfg.vocab) {
            return Err(Error::UnknownToken(format!("id {bad}")));
        }
        let tok = g.param(self.ids.tok_emb);
        let pos = g.param(self.ids.pos_emb);
        let e = g.embedding(tok, inputs);
        let positions: Vec<u32> = (0..inputs.len() as u32).collect();
        let p = g.embedding(pos, &positions);
        let mut x = g.add(e, p);
        for layer in &self.ids.dec {
            let a = self.norm(g, x, layer.ln1);
            let a = self.attn(g, a, a, layer.self_attn, true, None);
            x = g.add(x, a);
            let c = self.norm(g, x, layer.ln2);
            let c = self.attn(g, c, memory, layer.cross, false, bias);
            x = g.add(x, c);
            let f = self.norm(g, x, layer.ln3);
            let f = self.ffn(g, f, layer.ffn);
            x = g.add(x, f);
        }
        let hdn = self.norm(g, x, self.ids.dec_ln);
        Ok(self.ids.out.iter().map(|l| self.lin(g, hdn, *l)).collect())
    }

    /// Builds all losses for one sample.
    ///
    /// `inputs` are the (possibly noised) decoder inputs and `targets` the
    /// clean sequence; both start with BOS. Head `i` at position `t` is
    /// scored against `targets[t + i]`. `weights` are the MTP weights.
    pub fn losses(
        &self,
        g: &mut Graph<T>,
        image: &[T],
        inputs: &[u32],
        targets: &[u32],
        target_maps: &[T],
        weights: &[T],
        pad: u32,
    ) -> Result<LossVars> {
        check_weights(weights, self.cfg.mtp_heads)?;
        if inputs.len() != targets.len() || targets.len() < 2 {
            return Err(Error::ShapeMismatch("inputs and targets must align and hold at least two tokens".into()));
        }
        let enc = self.encode(g, image)?;
        let bias = self.key_bias(&g.value(enc.head_logits).data)?;
        let bias_t: Option<Vec<T>> = bias.map(|b| b.values.iter().map(|&v| T::of(v)).collect());
        let len = targets.len() - 1;
        let heads = self.decode_train(g, enc.memory, bias_t.as_deref(), &inputs[..len])?;
        let ces: Vec<Var> = heads
            .iter()
            .enumerate()
            .map(|(i, &logits)| {
                let offset_targets = mtp_targets(targets, i + 1, pad);
                g.cross_entropy(logits, &offset_targets)
            })
            .collect();
        let seq = ces[0];
        let mtp = g.weighted_sum(&ces, weights);
        if target_maps.len() != g.value(enc.head_logits).len() {
            return Err(Error::ShapeMismatch("target maps do not match the structure head".into()));
        }
        let prior = g.bce_dice(enc.head_logits, target_maps);
        let total = g.weighted_sum(&[mtp, prior], &[T::one(), T::one()]);
        Ok(LossVars { seq, mtp, prior, total })
    }

    /// Runs the encoder without recording gradients and precomputes the
    /// cross-attention keys and values of every decoder layer.
    pub fn encode_image(&self, image: &[T]) -> Result<EncodedImage<T>> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, image)?;
        let memory = g.value(enc.memory).data.clone();
        let head_logits = g.value(enc.head_logits).data.clone();
        let bias = self.key_bias(&head_logits)?;
        let bias_t = bias.as_ref().map(|b| b.values.iter().map(|&v| T::of(v)).collect());
        let d = self.cfg.d_model;
        let tk = memory.len() / d;
        let p = &self.params;
        let lin = |x: &[T], l: Lin| kernels::linear_fwd(x, x.len() / d, d, &p.get(l.w).data, d, Some(&p.get(l.b).data));
        let cross_k = self.ids.dec.iter().map(|l| lin(&memory, l.cross.k)).collect();
        let cross_v = self.ids.dec.iter().map(|l| lin(&memory, l.cross.v)).collect();
        Ok(EncodedImage { memory, tk, head_logits, bias, bias_t, cross_k, cross_v })
    }

    pub fn new_cache(&self) -> KvCache<T> {
        KvCache { k: vec![Vec::new(); self.cfg.dec_layers], v: vec![Vec::new(); self.cfg.dec_layers], len: 0 }
    }

    /// Feeds `ids` after the cached prefix and returns, for the last fed
    /// position, the logits of every head.
    pub fn step(&self, enc: &EncodedImage<T>, cache: &mut KvCache<T>, ids: &[u32]) -> Result<Vec<Vec<T>>> {
        let (d, m, start) = (self.cfg.d_model, ids.len(), cache.len);
        if m == 0 || start + m > self.cfg.max_len {
            return Err(Error::ShapeMismatch(format!("cannot decode past {} positions", self.cfg.max_len)));
        }
        let p = &self.params;
        let lin = |x: &[T], l: Lin| {
            let w = p.get(l.w);
            kernels::linear_fwd(x, x.len() / w.shape[0], w.shape[0], &w.data, w.shape[1], Some(&p.get(l.b).data))
        };
        let norm = |x: &[T], n: Norm| kernels::layernorm_fwd(x, d, &p.get(n.g).data, &p.get(n.b).data).0;
        let add = |x: &mut Vec<T>, y: &[T]| x.iter_mut().zip(y).for_each(|(a, &b)| *a += b);

        let tok = &p.get(self.ids.tok_emb).data;
        let pos = &p.get(self.ids.pos_emb).data;
        let mut x = Vec::with_capacity(m * d);
        for (i, &id) in ids.iter().enumerate() {
            if id as usize >= self.cfg.vocab {
                return Err(Error::UnknownToken(format!("id {id}")));
            }
            let at = start + i;
            x.extend((0..d).map(|j| tok[id as usize * d + j] + pos[at * d + j]));
        }
        for (l, layer) in self.ids.dec.iter().enumerate() {
            let a = norm(&x, layer.ln1);
            let q = lin(&a, layer.self_attn.q);
            cache.k[l].extend(lin(&a, layer.self_attn.k));
            cache.v[l].extend(lin(&a, layer.self_attn.v));
            let shape = AttnShape { tq: m, tk: start + m, d, heads: self.cfg.heads, causal_offset: Some(start) };
            let (o, _) = kernels::attention_fwd(&q, &cache.k[l], &cache.v[l], shape, None);
            add(&mut x, &lin(&o, layer.self_attn.o));

            let c = norm(&x, layer.ln2);
            let q = lin(&c, layer.cross.q);
            let shape = AttnShape { tq: m, tk: enc.tk, d, heads: self.cfg.heads, causal_offset: None };
            let (o, _) = kernels::attention_fwd(&q, &enc.cross_k[l], &enc.cross_v[l], shape, enc.bias_t.as_deref());
            add(&mut x, &lin(&o, layer.cross.o));

            let f = norm(&x, layer.ln3);
            let mut h = lin(&f, layer.ffn.up);
            h.iter_mut().for_each(|v| *v = kernels::silu(*v));
            add(&mut x, &lin(&h, layer.ffn.down));
        }
        cache.len += m;
        let last = norm(&x[(m - 1) * d..], self.ids.dec_ln);
        Ok(self.ids.out.iter().map(|l| lin(&last, *l)).collect())
    }
}

/// Targets of head `offset` (1-based): `targets[t + offset]` for inputs
/// `targets[..len-1]`, `None` past the end or on padding.
pub fn mtp_targets(targets: &[u32], offset: usize, pad: u32) -> Vec<Option<u32>> {
    let len = targets.len() - 1;
    (0..len)
        .map(|t| targets.get(t + offset).copied().filter(|&id| id != pad))
        .collect()
}

pub fn check_weights<T: Scalar>(weights: &[T], heads: usize) -> Result<()> {
    let sum: f64 = weights.iter().map(|w| w.to_f64().unwrap()).sum();
    if weights.len() != heads {
        return Err(Error::ShapeMismatch(format!("{} MTP weights for {heads} heads", weights.len())));
    }
    // 1e-9 in f64; f32 weights only need to sum to 1 up to their own rounding.
    let tol = (T::epsilon().to_f64().unwrap() * heads as f64).max(1e-9);
    if (sum - 1.0).abs() > tol {
        return Err(Error::WeightsNotNormalized(sum));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mtp: usize) -> ModelConfig {
        ModelConfig {
            image_h: 32,
            image_w: 32,
            conv1: 4,
            conv2: 4,
            d_model: 16,
            heads: 2,
            ffn: 24,
            dec_layers: 2,
            head_channels: 4,
            vocab: 40,
            max_len: 32,
            mtp_heads: mtp,
            ..Default::default()
        }
    }

    fn image(cfg: &ModelConfig, seed: usize) -> Vec<f64> {
        (0..cfg.image_h * cfg.image_w).map(|i| (((i + seed) * 2654435761) % 1000) as f64 / 500.0 - 1.0).collect()
    }

    #[test]
    fn encoder_geometry() {
        let cfg = ModelConfig { image_h: 64, image_w: 64, ..Default::default() };
        assert_eq!(cfg.grid(), (4, 8));
        let m = MicroModel::<f32>::new(cfg.clone(), 0).unwrap();
        let mut g = Graph::new(&m.params);
        let img = vec![0.1f32; 64 * 64];
        let e = m.encode(&mut g, &img).unwrap();
        assert_eq!(g.value(e.memory).shape, vec![32, 64]);
        assert_eq!(g.value(e.head_logits).shape, vec![3, 8, 8]);
    }

    #[test]
    fn cached_steps_match_teacher_forcing() {
        let cfg = tiny(3);
        let m = MicroModel::<f64>::new(cfg.clone(), 3).unwrap();
        let img = image(&cfg, 1);
        let ids: Vec<u32> = vec![1, 5, 9, 13, 2, 7, 30];
        let mut g = Graph::new(&m.params);
        let enc = m.encode(&mut g, &img).unwrap();
        let bias = m.key_bias(&g.value(enc.head_logits).data).unwrap();
        let bias_t: Option<Vec<f64>> = bias.map(|b| b.values);
        let heads = m.decode_train(&mut g, enc.memory, bias_t.as_deref(), &ids).unwrap();

        let encoded = m.encode_image(&img).unwrap();
        let mut cache = m.new_cache();
        // Feed in uneven chunks to exercise the causal offset.
        let mut fed = 0;
        for chunk in [1usize, 2, 3, 1] {
            let out = m.step(&encoded, &mut cache, &ids[fed..fed + chunk]).unwrap();
            fed += chunk;
            for (h, logits) in out.iter().enumerate() {
                let full = &g.value(heads[h]).data[(fed - 1) * cfg.vocab..fed * cfg.vocab];
                for (a, b) in logits.iter().zip(full) {
                    assert!((a - b).abs() < 1e-10, "head {h} position {fed}");
                }
            }
        }
    }

    #[test]
    fn mtp_target_offsets() {
        let t = [1, 10, 11, 12, 2];
        assert_eq!(mtp_targets(&t, 1, 0), vec![Some(10), Some(11), Some(12), Some(2)]);
        assert_eq!(mtp_targets(&t, 3, 0), vec![Some(12), Some(2), None, None]);
        assert!(matches!(check_weights(&[0.5f64, 0.4], 2), Err(Error::WeightsNotNormalized(_))));
    }

    #[test]
    fn bias_path_is_detached() {
        // With the prior term removed, the structure head receives no
        // gradient even though the key bias is computed from its output.
        let cfg = tiny(1);
        let m = MicroModel::<f64>::new(cfg.clone(), 5).unwrap();
        let img = image(&cfg, 2);
        let ids = vec![1u32, 4, 8, 2];
        let maps = vec![0.0; 3 * 4 * 4];
        let mut g = Graph::new(&m.params);
        let l = m.losses(&mut g, &img, &ids, &ids, &maps, &[1.0], 0).unwrap();
        let mut grads = super::super::tape::Grads::zeros_like(&m.params);
        g.backward(l.mtp, &mut grads);
        for (id, (name, _)) in m.params.iter().enumerate() {
            if name.starts_with("head.") {
                assert!(grads.tensors[id].data.iter().all(|&v| v == 0.0), "{name}");
            }
        }
        assert!(grads.sq_norm() > 0.0);
    }
}
