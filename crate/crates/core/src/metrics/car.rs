//! Cell adjacency relations (CAR) and box AP at IoU 0.5.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{adjacency, BBox, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |num: usize, den: usize, other: usize| if den == 0 { f64::from(u8::from(other == 0)) } else { num as f64 / den as f64 };
        let precision = ratio(matched, predicted, gold);
        let recall = ratio(matched, gold, predicted);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

fn boxes(t: &Table) -> Result<Vec<BBox>> {
    t.cells().iter().map(|c| c.bbox.ok_or(Error::MissingBoxes)).collect()
}

/// Greedy one-to-one matching by descending IoU among pairs with
/// IoU >= `thresh`; returns the gold index matched to each prediction.
pub fn match_boxes(pred: &[BBox], gold: &[BBox], thresh: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            let v = p.iou(g);
            if v >= thresh {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut to_gold = vec![None; pred.len()];
    let mut used = vec![false; gold.len()];
    for (_, i, j) in pairs {
        if to_gold[i].is_none() && !used[j] {
            to_gold[i] = Some(j);
            used[j] = true;
        }
    }
    to_gold
}

/// Adjacency-pair precision/recall/F1 after matching cells by IoU.
///
/// When a side has no pairs its ratio is 1 if the other side has none
/// either, else 0.
pub fn car_eval(pred: &Table, gold: &Table, iou_thresh: f64) -> Result<Prf> {
    boxes(pred)?;
    car_eval_partial(pred, gold, iou_thresh)
}

/// [`car_eval`] where predicted cells without a box simply stay
/// unmatched. Gold boxes are still required.
pub fn car_eval_partial(pred: &Table, gold: &Table, iou_thresh: f64) -> Result<Prf> {
    let gb = boxes(gold)?;
    let boxed: Vec<(usize, BBox)> = pred.cells().iter().filter_map(|c| c.bbox.map(|b| (c.id, b))).collect();
    let pb: Vec<BBox> = boxed.iter().map(|x| x.1).collect();
    let mut m = vec![None; pred.cells().len()];
    for (k, g) in match_boxes(&pb, &gb, iou_thresh).into_iter().enumerate() {
        m[boxed[k].0] = g;
    }
    let (pa, ga) = (adjacency(pred), adjacency(gold));
    let matched = pa
        .pairs
        .iter()
        .filter(|&&(a, b, dir)| matches!((m[a], m[b]), (Some(x), Some(y)) if ga.contains(x, y, dir)))
        .count();
    Ok(Prf::from_counts(matched, pa.len(), ga.len()))
}

/// All-point interpolated AP at IoU 0.5 over one or more images.
///
/// Detections are ranked by score (stable on ties) and each takes the best
/// still-unmatched gold box of its image. With no gold boxes AP is 1 if
/// there are no detections, else 0.
pub fn ap50(images: &[(Vec<(BBox, f64)>, Vec<BBox>)]) -> f64 {
    let n_gold: usize = images.iter().map(|(_, g)| g.len()).sum();
    let mut dets: Vec<(f64, usize, usize)> = Vec::new();
    for (k, (p, _)) in images.iter().enumerate() {
        dets.extend(p.iter().enumerate().map(|(i, &(_, s))| (s, k, i)));
    }
    if n_gold == 0 {
        return f64::from(u8::from(dets.is_empty()));
    }
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut used: Vec<Vec<bool>> = images.iter().map(|(_, g)| vec![false; g.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::with_capacity(dets.len());
    for (_, k, i) in dets {
        let pb = images[k].0[i].0;
        let best = images[k]
            .1
            .iter()
            .enumerate()
            .filter(|&(j, g)| !used[k][j] && pb.iou(g) >= 0.5)
            .max_by(|a, b| pb.iou(a.1).total_cmp(&pb.iou(b.1)).then(b.0.cmp(&a.0)));
        match best {
            Some((j, _)) => {
                used[k][j] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        curve.push((tp as f64 / n_gold as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for idx in 0..curve.len() {
        let (r, _) = curve[idx];
        if r > prev_r {
            let p_interp = curve[idx..].iter().map(|c| c.1).fold(0.0, f64::max);
            ap += (r - prev_r) * p_interp;
            prev_r = r;
        }
    }
    ap
}

/// Cell boxes of a predicted and a gold table as one AP image, every
/// prediction scored 1. Predicted cells without a box are not detections;
/// gold cells must all carry one.
pub fn table_ap_input(pred: &Table, gold: &Table) -> Result<(Vec<(BBox, f64)>, Vec<BBox>)> {
    Ok((pred.cells().iter().filter_map(|c| c.bbox.map(|b| (b, 1.0))).collect(), boxes(gold)?))
}
