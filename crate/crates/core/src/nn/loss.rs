//! Value-level loss functions; the tape versions live on [`super::Graph`].

use crate::error::{Error, Result};
use crate::targets::StructMaps;

use super::kernels;
use super::model::check_weights;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Mean cross-entropy of `logits[n,V]` over non-`None` targets.
pub fn loss_seq<T: Scalar>(logits: &Tensor<T>, targets: &[Option<u32>]) -> Result<T> {
    if logits.rows() != targets.len() {
        return Err(Error::ShapeMismatch(format!("{} logit rows for {} targets", logits.rows(), targets.len())));
    }
    Ok(kernels::cross_entropy_fwd(&logits.data, logits.row_len(), targets).0)
}

/// BCE with logits plus `0.5 * Dice` against the three target channels.
pub fn loss_prior<T: Scalar>(pred_logits: &[T], target: &StructMaps) -> Result<T> {
    let t: Vec<T> = target.to_chw().into_iter().map(|v| T::of(v as f64)).collect();
    if t.len() != pred_logits.len() {
        return Err(Error::ShapeMismatch(format!("{} logits for {} target values", pred_logits.len(), t.len())));
    }
    Ok(kernels::bce_dice_fwd(pred_logits, &t).0)
}

/// `sum_i w_i CE(head_i, targets shifted by i)`.
///
/// `head_logits[i]` holds head `i + 1` for inputs `targets[..len-1]`.
pub fn loss_mtp<T: Scalar>(head_logits: &[Tensor<T>], targets: &[u32], weights: &[T], pad: u32) -> Result<T> {
    check_weights(weights, head_logits.len())?;
    let mut total = T::zero();
    for (i, (logits, &w)) in head_logits.iter().zip(weights).enumerate() {
        let t = super::model::mtp_targets(targets, i + 1, pad);
        total += w * loss_seq(logits, &t)?;
    }
    Ok(total)
}

/// `L = L_seq + L_prior`.
pub fn total_loss<T: Scalar>(seq: T, prior: T) -> T {
    seq + prior
}
