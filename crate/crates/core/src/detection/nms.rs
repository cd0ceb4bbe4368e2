//! Greedy non-maximum suppression and its grid-bucketed equivalent.
//!
//! Both walk the detections in [`rank_order`] and keep a box iff its IoU with
//! every already-kept box is below the threshold. The bucketed variant only
//! compares against kept boxes in the 3x3 neighbourhood of grid cells: with a
//! cell side at least the largest box side, two boxes whose top-left corners
//! are more than one cell apart cannot intersect, so the kept set is identical.

use std::collections::HashMap;

use super::{iou, Detection};

/// Indices of `dets` in processing order (see [`Detection::rank_cmp`]).
pub fn rank_order(dets: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[a].rank_cmp(&dets[b]).then(a.cmp(&b)));
    idx
}

/// Reference O(n·k) greedy NMS. Output is in rank order.
pub fn nms_greedy(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in rank_order(dets) {
        let d = &dets[i];
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) < iou_threshold) {
            kept.push(*d);
        }
    }
    kept
}

/// Greedy NMS with spatial hashing. `cell_px` is raised to the largest box
/// side if smaller (pass 0 to size automatically). Output equals
/// [`nms_greedy`] element for element.
pub fn nms_bucketed(dets: &[Detection], iou_threshold: f64, cell_px: f64) -> Vec<Detection> {
    if dets.is_empty() {
        return Vec::new();
    }
    let max_side = dets
        .iter()
        .map(|d| d.bbox.height().max(d.bbox.width()))
        .fold(0.0f64, f64::max);
    let cell = cell_px.max(max_side).max(f64::MIN_POSITIVE);
    let key = |d: &Detection| {
        (
            (d.bbox.row0() / cell).floor() as i64,
            (d.bbox.col0() / cell).floor() as i64,
        )
    };

    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<Detection> = Vec::new();
    for i in rank_order(dets) {
        let d = &dets[i];
        let (kr, kc) = key(d);
        let mut suppressed = false;
        'scan: for dr in -1..=1 {
            for dc in -1..=1 {
                if let Some(bucket) = grid.get(&(kr + dr, kc + dc)) {
                    if bucket
                        .iter()
                        .any(|&k| iou(&kept[k].bbox, &d.bbox) >= iou_threshold)
                    {
                        suppressed = true;
                        break 'scan;
                    }
                }
            }
        }
        if !suppressed {
            grid.entry((kr, kc)).or_default().push(kept.len());
            kept.push(*d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::BBox;
    use proptest::prelude::*;

    fn det(r0: f64, c0: f64, r1: f64, c1: f64, conf: f64) -> Detection {
        Detection::from_coords(r0, c0, r1, c1, conf).unwrap()
    }

    #[test]
    fn suppresses_lower_confidence_overlap() {
        // IoU = 0.6: 10x10 boxes offset by 2.5 columns -> inter 75, union 125
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = det(0.0, 2.5, 10.0, 12.5, 0.8);
        assert!((iou(&a.bbox, &b.bbox) - 0.6).abs() < 1e-12);
        assert_eq!(nms_greedy(&[b, a], 0.5), vec![a]);
        assert_eq!(nms_bucketed(&[b, a], 0.5, 0.0), vec![a]);
    }

    #[test]
    fn chain_keeps_ends() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = det(0.0, 2.5, 10.0, 12.5, 0.8);
        let c = det(0.0, 5.0, 10.0, 15.0, 0.7);
        // B overlaps both; A and C only share a third
        assert!((iou(&b.bbox, &c.bbox) - 0.6).abs() < 1e-12);
        assert!((iou(&a.bbox, &c.bbox) - 1.0 / 3.0).abs() < 1e-12);
        let kept = nms_greedy(&[c, b, a], 0.5);
        assert_eq!(kept, vec![a, c]);
        let far = Detection {
            bbox: BBox::new(0.0, 10.0, 10.0, 20.0).unwrap(),
            ..c
        };
        assert_eq!(nms_greedy(&[far, b, a], 0.5), vec![a, far]);
    }

    #[test]
    fn disjoint_all_kept_and_trivial_inputs() {
        let dets: Vec<_> = (0..20)
            .map(|i| det(0.0, 3.0 * i as f64, 2.0, 3.0 * i as f64 + 2.0, 0.5))
            .collect();
        assert_eq!(nms_greedy(&dets, 0.5).len(), 20);
        assert!(nms_bucketed(&[], 0.5, 16.0).is_empty());
        assert_eq!(nms_bucketed(&dets[..1], 0.5, 16.0), dets[..1].to_vec());
    }

    #[test]
    fn ties_broken_by_origin() {
        let a = det(5.0, 5.0, 15.0, 15.0, 0.8);
        let b = det(4.0, 5.0, 14.0, 15.0, 0.8);
        assert_eq!(nms_greedy(&[a, b], 0.5), vec![b]);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec(
            (0.0f64..300.0, 0.0f64..300.0, 1.0f64..40.0, 1.0f64..40.0, 0.0f64..=1.0),
            0..200,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(r, c, h, w, s)| det(r, c, r + h, c + w, (s * 20.0).round() / 20.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn bucketed_equals_greedy(dets in arb_dets(), thr in 0.05f64..0.95, cell in 0.0f64..80.0) {
            prop_assert_eq!(nms_bucketed(&dets, thr, cell), nms_greedy(&dets, thr));
        }

        #[test]
        fn output_properties(dets in arb_dets(), thr in 0.05f64..0.95) {
            let kept = nms_greedy(&dets, thr);
            for (i, a) in kept.iter().enumerate() {
                prop_assert!(dets.contains(a));
                for b in &kept[i + 1..] {
                    prop_assert!(iou(&a.bbox, &b.bbox) < thr);
                }
            }
            if let Some(&top) = rank_order(&dets).first() {
                prop_assert_eq!(kept[0], dets[top]);
            }
        }
    }
}
