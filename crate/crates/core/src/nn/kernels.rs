//! Pure forward/backward kernels shared by the tape and the cached
//! inference path. Matrices are dense row-major slices.

use super::scalar::{gemm, Scalar, View};

pub const LN_EPS: f64 = 1e-5;

/// `y[n,o] = x[n,i] w[i,o] + b[o]`.
pub fn linear_fwd<T: Scalar>(x: &[T], n: usize, i: usize, w: &[T], o: usize, b: Option<&[T]>) -> Vec<T> {
    let mut y = vec![T::zero(); n * o];
    if let Some(b) = b {
        for row in y.chunks_mut(o) {
            row.copy_from_slice(b);
        }
    }
    let beta = if b.is_some() { T::one() } else { T::zero() };
    gemm(T::one(), View::dense(x, n, i), View::dense(w, i, o), beta, &mut y, 0, o, 1);
    y
}

/// Accumulates gradients of [`linear_fwd`].
#[allow(clippy::too_many_arguments)]
pub fn linear_bwd<T: Scalar>(
    dy: &[T],
    x: &[T],
    n: usize,
    i: usize,
    w: &[T],
    o: usize,
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    if let Some(dx) = dx {
        gemm(T::one(), View::dense(dy, n, o), View::dense_t(w, i, o), T::one(), dx, 0, i, 1);
    }
    if let Some(dw) = dw {
        gemm(T::one(), View::dense_t(x, n, i), View::dense(dy, n, o), T::one(), dw, 0, o, 1);
    }
    if let Some(db) = db {
        for row in dy.chunks(o) {
            for (a, &g) in db.iter_mut().zip(row) {
                *a += g;
            }
        }
    }
}

pub fn silu<T: Scalar>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

/// Row-wise layer norm; returns output, per-row mean and reciprocal std.
pub fn layernorm_fwd<T: Scalar>(x: &[T], d: usize, g: &[T], b: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut means = Vec::with_capacity(n);
    let mut rstds = Vec::with_capacity(n);
    let inv_d = T::one() / T::of(d as f64);
    for (row, out) in x.chunks(d).zip(y.chunks_mut(d)) {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rstd = T::one() / (var + T::of(LN_EPS)).sqrt();
        for j in 0..d {
            out[j] = (row[j] - mean) * rstd * g[j] + b[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (y, means, rstds)
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_bwd<T: Scalar>(
    dy: &[T],
    x: &[T],
    d: usize,
    g: &[T],
    means: &[T],
    rstds: &[T],
    dx: Option<&mut [T]>,
    dg: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let inv_d = T::one() / T::of(d as f64);
    let mut dx = dx;
    let mut dg = dg;
    let mut db = db;
    for (r, (row, dyr)) in x.chunks(d).zip(dy.chunks(d)).enumerate() {
        let (mean, rstd) = (means[r], rstds[r]);
        let mut sum_dyg = T::zero();
        let mut sum_dyg_xhat = T::zero();
        for j in 0..d {
            let xhat = (row[j] - mean) * rstd;
            let dyg = dyr[j] * g[j];
            sum_dyg += dyg;
            sum_dyg_xhat += dyg * xhat;
            if let Some(dg) = dg.as_deref_mut() {
                dg[j] += dyr[j] * xhat;
            }
            if let Some(db) = db.as_deref_mut() {
                db[j] += dyr[j];
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let m1 = sum_dyg * inv_d;
            let m2 = sum_dyg_xhat * inv_d;
            for j in 0..d {
                let xhat = (row[j] - mean) * rstd;
                dx[r * d + j] += rstd * (dyr[j] * g[j] - m1 - xhat * m2);
            }
        }
    }
}

/// Shape of a multi-head attention call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnShape {
    pub tq: usize,
    pub tk: usize,
    pub d: usize,
    pub heads: usize,
    /// Query `i` may see keys `0..=i + offset`; `None` means unmasked.
    pub causal_offset: Option<usize>,
}

impl AttnShape {
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Number of visible keys for query `i`.
    pub fn limit(&self, i: usize) -> usize {
        match self.causal_offset {
            Some(off) => (i + off + 1).min(self.tk),
            None => self.tk,
        }
    }
}

/// In-place softmax over `row[..limit]`; entries past `limit` become 0.
pub fn softmax_prefix<T: Scalar>(row: &mut [T], limit: usize) {
    let max = row[..limit].iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in &mut row[..limit] {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in &mut row[..limit] {
        *v /= sum;
    }
    for v in &mut row[limit..] {
        *v = T::zero();
    }
}

/// Multi-head `softmax(Q K^T / sqrt(d_head) + M + b) V`.
///
/// `q` is `tq x d`, `k` and `v` are `tk x d`; heads split the feature axis.
/// The bias is added to every head and query. Returns the concatenated head
/// outputs and the attention weights `heads x tq x tk`.
pub fn attention_fwd<T: Scalar>(q: &[T], k: &[T], v: &[T], s: AttnShape, bias: Option<&[T]>) -> (Vec<T>, Vec<T>) {
    let (tq, tk, d) = (s.tq, s.tk, s.d);
    let dh = s.head_dim();
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut out = vec![T::zero(); tq * d];
    let mut probs = vec![T::zero(); s.heads * tq * tk];
    for h in 0..s.heads {
        let p = &mut probs[h * tq * tk..(h + 1) * tq * tk];
        gemm(
            scale,
            View::strided(q, h * dh, tq, dh, d, 1),
            View::strided(k, h * dh, dh, tk, 1, d),
            T::zero(),
            p,
            0,
            tk,
            1,
        );
        for i in 0..tq {
            let row = &mut p[i * tk..(i + 1) * tk];
            let limit = s.limit(i);
            if let Some(b) = bias {
                for j in 0..limit {
                    row[j] += b[j];
                }
            }
            softmax_prefix(row, limit);
        }
        gemm(T::one(), View::dense(p, tq, tk), View::strided(v, h * dh, tk, dh, d, 1), T::zero(), &mut out, h * dh, d, 1);
    }
    (out, probs)
}

/// Accumulates gradients of [`attention_fwd`] into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub fn attention_bwd<T: Scalar>(
    dout: &[T],
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    s: AttnShape,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let (tq, tk, d) = (s.tq, s.tk, s.d);
    let dh = s.head_dim();
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut ds = vec![T::zero(); tq * tk];
    for h in 0..s.heads {
        let p = &probs[h * tq * tk..(h + 1) * tq * tk];
        // dP = dO_h V_h^T
        gemm(
            T::one(),
            View::strided(dout, h * dh, tq, dh, d, 1),
            View::strided(v, h * dh, dh, tk, 1, d),
            T::zero(),
            &mut ds,
            0,
            tk,
            1,
        );
        // dV_h += P^T dO_h
        gemm(T::one(), View::dense_t(p, tq, tk), View::strided(dout, h * dh, tq, dh, d, 1), T::one(), dv, h * dh, d, 1);
        for i in 0..tq {
            let pr = &p[i * tk..(i + 1) * tk];
            let dr = &mut ds[i * tk..(i + 1) * tk];
            let dot: T = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
            for j in 0..tk {
                dr[j] = pr[j] * (dr[j] - dot);
            }
        }
        gemm(scale, View::dense(&ds, tq, tk), View::strided(k, h * dh, tk, dh, d, 1), T::one(), dq, h * dh, d, 1);
        gemm(scale, View::dense_t(&ds, tq, tk), View::strided(q, h * dh, tq, dh, d, 1), T::one(), dk, h * dh, d, 1);
    }
}

/// Rotation tables for 2D RoPE over a `grid_h x grid_w` token grid.
///
/// Channels `[0, d/2)` rotate by the row index and `[d/2, d)` by the column
/// index; within each half adjacent channel pairs `(2i, 2i+1)` rotate at
/// frequency `base^(-i / (d/4))`. Tables are `tokens x d/2` (one entry per
/// channel pair).
pub fn rope_tables<T: Scalar>(grid_h: usize, grid_w: usize, d: usize, base: f64) -> (Vec<T>, Vec<T>) {
    assert!(d % 4 == 0, "2D RoPE needs d divisible by 4, got {d}");
    let quarter = d / 4;
    let mut cos = Vec::with_capacity(grid_h * grid_w * d / 2);
    let mut sin = Vec::with_capacity(grid_h * grid_w * d / 2);
    for y in 0..grid_h {
        for x in 0..grid_w {
            for half in 0..2 {
                let pos = if half == 0 { y } else { x } as f64;
                for i in 0..quarter {
                    let theta = base.powf(-(i as f64) / quarter as f64);
                    cos.push(T::of((pos * theta).cos()));
                    sin.push(T::of((pos * theta).sin()));
                }
            }
        }
    }
    (cos, sin)
}

/// Rotates each channel pair; `inverse` applies the transpose rotation.
pub fn rope_apply<T: Scalar>(x: &[T], d: usize, cos: &[T], sin: &[T], inverse: bool, out: &mut [T]) {
    let pairs = d / 2;
    for t in 0..x.len() / d {
        for p in 0..pairs {
            let (c, s) = (cos[t * pairs + p], sin[t * pairs + p]);
            let s = if inverse { -s } else { s };
            let (a, b) = (x[t * d + 2 * p], x[t * d + 2 * p + 1]);
            out[t * d + 2 * p] += a * c - b * s;
            out[t * d + 2 * p + 1] += a * s + b * c;
        }
    }
}

/// 2D convolution geometry for a `c x h x w` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.ph - self.kh) / self.sh + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pw - self.kw) / self.sw + 1
    }

    pub fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Unfolds input patches into a `patch x (out_h*out_w)` matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut cols = vec![T::zero(); g.patch() * oh * ow];
    for c in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * ow + ox] = x[(c * g.h + iy as usize) * g.w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for c in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dx[(c * g.h + iy as usize) * g.w + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Mean cross-entropy over rows with a target; returns the loss, the
/// softmax probabilities and the number of counted rows.
pub fn cross_entropy_fwd<T: Scalar>(logits: &[T], classes: usize, targets: &[Option<u32>]) -> (T, Vec<T>, usize) {
    let mut probs = logits.to_vec();
    let mut total = T::zero();
    let mut count = 0;
    for (row, t) in probs.chunks_mut(classes).zip(targets) {
        let Some(t) = t else { continue };
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let shifted_target = row[*t as usize] - max;
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        total += sum.ln() - shifted_target;
        for v in row.iter_mut() {
            *v /= sum;
        }
        count += 1;
    }
    let loss = if count == 0 { T::zero() } else { total / T::of(count as f64) };
    (loss, probs, count)
}

pub fn cross_entropy_bwd<T: Scalar>(up: T, probs: &[T], classes: usize, targets: &[Option<u32>], count: usize, dlogits: &mut [T]) {
    if count == 0 {
        return;
    }
    let scale = up / T::of(count as f64);
    for ((row, t), dr) in probs.chunks(classes).zip(targets).zip(dlogits.chunks_mut(classes)) {
        let Some(t) = t else { continue };
        for (j, (&p, g)) in row.iter().zip(dr.iter_mut()).enumerate() {
            let onehot = if j == *t as usize { T::one() } else { T::zero() };
            *g += scale * (p - onehot);
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Dice smoothing constant.
pub const DICE_EPS: f64 = 1.0;

/// Mean BCE-with-logits plus `0.5 * (1 - (2 sum(pt) + eps) / (sum p + sum t + eps))`.
/// Returns the loss and its BCE and Dice parts.
pub fn bce_dice_fwd<T: Scalar>(logits: &[T], target: &[T]) -> (T, T, T) {
    let n = T::of(logits.len() as f64);
    let mut bce = T::zero();
    let (mut inter, mut sp, mut st) = (T::zero(), T::zero(), T::zero());
    for (&x, &t) in logits.iter().zip(target) {
        bce += x.max(T::zero()) - x * t + (T::one() + (-x.abs()).exp()).ln();
        let p = sigmoid(x);
        inter += p * t;
        sp += p;
        st += t;
    }
    let eps = T::of(DICE_EPS);
    let bce = bce / n;
    let dice = T::of(0.5) * (T::one() - (T::of(2.0) * inter + eps) / (sp + st + eps));
    (bce + dice, bce, dice)
}

pub fn bce_dice_bwd<T: Scalar>(up: T, logits: &[T], target: &[T], dlogits: &mut [T]) {
    let n = T::of(logits.len() as f64);
    let eps = T::of(DICE_EPS);
    let (mut inter, mut sp, mut st) = (T::zero(), T::zero(), T::zero());
    for (&x, &t) in logits.iter().zip(target) {
        let p = sigmoid(x);
        inter += p * t;
        sp += p;
        st += t;
    }
    let den = sp + st + eps;
    let num = T::of(2.0) * inter + eps;
    for ((&x, &t), g) in logits.iter().zip(target).zip(dlogits.iter_mut()) {
        let p = sigmoid(x);
        let d_bce = (p - t) / n;
        let d_dice_dp = -T::of(0.5) * (T::of(2.0) * t * den - num) / (den * den);
        *g += up * (d_bce + d_dice_dp * p * (T::one() - p));
    }
}
