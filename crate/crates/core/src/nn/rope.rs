//! 2D rotary position embedding on a feature grid.

use crate::error::{Error, Result};

use super::kernels;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Rotates a `[H', W', d]` feature grid: the first `d/2` channels by row
/// position, the rest by column position.
pub fn rope_2d<T: Scalar>(features: &Tensor<T>, base: f64) -> Result<Tensor<T>> {
    let [h, w, d] = features.shape[..] else {
        return Err(Error::ShapeMismatch(format!("expected [H, W, d], got {:?}", features.shape)));
    };
    if d % 4 != 0 {
        return Err(Error::ShapeMismatch(format!("2D RoPE needs d divisible by 4, got {d}")));
    }
    let (cos, sin) = kernels::rope_tables::<T>(h, w, d, base);
    let mut out = vec![T::zero(); features.len()];
    kernels::rope_apply(&features.data, d, &cos, &sin, false, &mut out);
    Ok(Tensor::new(&features.shape, out))
}
