//! Checked value-level entry point for key-biased multi-head attention.

use crate::error::{Error, Result};

use super::kernels::{self, AttnShape};
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Additive attention mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mask {
    #[default]
    None,
    /// Query `i` sees keys `0..=i`.
    Causal,
}

/// Projection weights of one attention block, each `d x d` stored
/// input-major (`w[i * d + o]`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams<T> {
    pub heads: usize,
    pub d: usize,
    pub wq: Vec<T>,
    pub wk: Vec<T>,
    pub wv: Vec<T>,
    pub wo: Vec<T>,
}

impl<T: Scalar> AttnParams<T> {
    pub fn new(heads: usize, d: usize, wq: Vec<T>, wk: Vec<T>, wv: Vec<T>, wo: Vec<T>) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::ShapeMismatch(format!("width {d} not divisible by {heads} heads")));
        }
        for w in [&wq, &wk, &wv, &wo] {
            if w.len() != d * d {
                return Err(Error::ShapeMismatch(format!("projection has {} values, expected {}", w.len(), d * d)));
            }
        }
        Ok(AttnParams { heads, d, wq, wk, wv, wo })
    }

    /// Projects `x_q[tq,d]` and `x_kv[tk,d]`, attends and applies `W_O`.
    pub fn forward(&self, x_q: &Tensor<T>, x_kv: &Tensor<T>, mask: Mask, bias: Option<&[T]>) -> Result<Tensor<T>> {
        let d = self.d;
        if x_q.row_len() != d || x_kv.row_len() != d {
            return Err(Error::ShapeMismatch(format!("inputs must have width {d}")));
        }
        let proj = |x: &Tensor<T>, w: &[T]| Tensor::new(&[x.rows(), d], kernels::linear_fwd(&x.data, x.rows(), d, w, d, None));
        let q = proj(x_q, &self.wq);
        let k = proj(x_kv, &self.wk);
        let v = proj(x_kv, &self.wv);
        let (a, _) = key_biased_attention(&q, &k, &v, self.heads, mask, bias)?;
        Ok(proj(&a, &self.wo))
    }
}

/// `softmax(Q K^T / sqrt(d_head) + M + b) V` per head.
///
/// Returns the concatenated head outputs `[tq, d]` and the attention
/// weights `[heads, tq, tk]`.
pub fn key_biased_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    mask: Mask,
    bias: Option<&[T]>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (tq, tk, d) = (q.rows(), k.rows(), q.row_len());
    if q.shape.len() != 2 || k.shape != v.shape || k.row_len() != d {
        return Err(Error::ShapeMismatch(format!("q {:?}, k {:?}, v {:?}", q.shape, k.shape, v.shape)));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::ShapeMismatch(format!("width {d} not divisible by {heads} heads")));
    }
    if let Some(b) = bias {
        if b.len() != tk {
            return Err(Error::ShapeMismatch(format!("bias length {} for {tk} keys", b.len())));
        }
    }
    if mask == Mask::Causal && tq > tk {
        return Err(Error::ShapeMismatch(format!("causal mask with {tq} queries over {tk} keys")));
    }
    let shape = AttnShape { tq, tk, d, heads, causal_offset: (mask == Mask::Causal).then_some(0) };
    let (out, probs) = kernels::attention_fwd(&q.data, &k.data, &v.data, shape, bias);
    Ok((Tensor::new(&[tq, d], out), Tensor::new(&[heads, tq, tk], probs)))
}
