//! Detection matching, precision/recall and all-points average precision.

use crate::detection::{iou, rank_order, Detection};

/// Default IoU threshold for a true positive.
pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DetMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(prediction index, ground-truth index, iou)` in processing order.
    pub matches: Vec<(usize, usize, f64)>,
    /// Prediction indices in processing order with their TP flag.
    pub ranked: Vec<(usize, bool)>,
}

/// Greedy matching in descending confidence. Each prediction takes the
/// still-unmatched ground truth with the highest IoU at or above
/// `iou_threshold` (lowest index on ties).
pub fn match_detections(preds: &[Detection], gts: &[Detection], iou_threshold: f64) -> DetMatch {
    let mut taken = vec![false; gts.len()];
    let mut matches = Vec::new();
    let mut ranked = Vec::with_capacity(preds.len());
    for i in rank_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&preds[i].bbox, &g.bbox);
            if v >= iou_threshold && best.map_or(true, |(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        match best {
            Some((j, v)) => {
                taken[j] = true;
                matches.push((i, j, v));
                ranked.push((i, true));
            }
            None => ranked.push((i, false)),
        }
    }
    let tp = matches.len();
    DetMatch {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        matches,
        ranked,
    }
}

/// Exact non-negative fraction; arithmetic returns `None` on overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ratio {
    num: u128,
    den: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    fn add(self, o: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, o.den);
        let den = (self.den / g).checked_mul(o.den)?;
        let num = self
            .num
            .checked_mul(o.den / g)?
            .checked_add(o.num.checked_mul(self.den / g)?)?;
        Some(Ratio::new(num, den))
    }

    fn mul(self, o: Ratio) -> Option<Ratio> {
        let a = Ratio::new(self.num, o.den);
        let b = Ratio::new(o.num, self.den);
        Some(Ratio::new(a.num.checked_mul(b.num)?, a.den.checked_mul(b.den)?))
    }

    fn gt(self, o: Ratio) -> bool {
        match (self.num.checked_mul(o.den), o.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a > b,
            _ => self.to_f64() > o.to_f64(),
        }
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// One point per distinct confidence level: `(recall, precision)` after all
/// predictions at or above that level are counted, as `(tp, tp + fp)`.
fn pr_counts(preds: &[Detection], m: &DetMatch) -> Vec<(usize, usize)> {
    let mut points = Vec::new();
    let (mut tp, mut n) = (0usize, 0usize);
    for (k, &(i, is_tp)) in m.ranked.iter().enumerate() {
        tp += usize::from(is_tp);
        n += 1;
        let last_of_level = m
            .ranked
            .get(k + 1)
            .map_or(true, |&(j, _)| preds[j].confidence != preds[i].confidence);
        if last_of_level {
            points.push((tp, n));
        }
    }
    points
}

/// Area under the all-points interpolated precision/recall curve. `None`
/// when there is no ground truth.
///
/// Predictions sharing a confidence value enter the curve together.
pub fn average_precision(preds: &[Detection], gts: &[Detection], iou_threshold: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let m = match_detections(preds, gts, iou_threshold);
    let points = pr_counts(preds, &m);
    Some(exact_ap(&points, gts.len()).unwrap_or_else(|| float_ap(&points, gts.len())))
}

fn exact_ap(points: &[(usize, usize)], n_gt: usize) -> Option<f64> {
    let mut max_p = vec![Ratio::new(0, 1); points.len()];
    let mut run = Ratio::new(0, 1);
    for (k, &(tp, n)) in points.iter().enumerate().rev() {
        let p = Ratio::new(tp as u128, n as u128);
        if p.gt(run) {
            run = p;
        }
        max_p[k] = run;
    }
    let mut ap = Ratio::new(0, 1);
    let mut prev_tp = 0usize;
    for (k, &(tp, _)) in points.iter().enumerate() {
        if tp > prev_tp {
            let dr = Ratio::new((tp - prev_tp) as u128, n_gt as u128);
            ap = ap.add(dr.mul(max_p[k])?)?;
            prev_tp = tp;
        }
    }
    Some(ap.to_f64())
}

fn float_ap(points: &[(usize, usize)], n_gt: usize) -> f64 {
    let mut max_p = vec![0.0f64; points.len()];
    let mut run = 0.0f64;
    for (k, &(tp, n)) in points.iter().enumerate().rev() {
        run = run.max(tp as f64 / n as f64);
        max_p[k] = run;
    }
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for (k, &(tp, _)) in points.iter().enumerate() {
        if tp > prev_tp {
            ap += (tp - prev_tp) as f64 / n_gt as f64 * max_p[k];
            prev_tp = tp;
        }
    }
    ap
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: Option<f64>,
    pub iou_threshold: f64,
}

pub fn det_metrics(preds: &[Detection], gts: &[Detection], iou_threshold: f64) -> DetMetrics {
    let m = match_detections(preds, gts, iou_threshold);
    let precision = if preds.is_empty() {
        0.0
    } else {
        m.tp as f64 / preds.len() as f64
    };
    let recall = if gts.is_empty() {
        1.0
    } else {
        m.tp as f64 / gts.len() as f64
    };
    DetMetrics {
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        precision,
        recall,
        ap: average_precision(preds, gts, iou_threshold),
        iou_threshold,
    }
}
