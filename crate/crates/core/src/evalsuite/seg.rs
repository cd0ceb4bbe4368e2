use super::EvalError;
use crate::raster::BinaryMask;

/// Pixel-level confusion counts and derived ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub f1: f64,
}

impl SegMetrics {
    /// Ratios from counts. Empty denominators read as perfect when there is
    /// nothing on the other side either, and as 0 otherwise.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64, vacuous: bool| {
            if den > 0 {
                num as f64 / den as f64
            } else if vacuous {
                1.0
            } else {
                0.0
            }
        };
        Self {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp, fn_ == 0),
            recall: ratio(tp, tp + fn_, fp == 0),
            iou: ratio(tp, tp + fp + fn_, true),
            f1: ratio(2 * tp, 2 * tp + fp + fn_, true),
        }
    }
}

pub fn seg_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<SegMetrics, EvalError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(EvalError::GridMismatch);
    }
    let p = pred.raster().grid().data();
    let g = gt.raster().grid().data();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&a, &b) in p.iter().zip(g) {
        match (a != 0, b != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(SegMetrics::from_counts(tp, fp, fn_))
}
