use half::f16;

use super::{BBox, Detection};

/// Nearest binary16 value (ties to even), widened back to f64.
/// Values beyond the binary16 range become infinite.
pub fn round_to_half(x: f64) -> f64 {
    f64::from(f16::from_f64(x))
}

/// Rounds confidence and all box coordinates to binary16.
///
/// Large coordinates lose sub-pixel precision (spacing is 2 px above 2048,
/// 32 px above 32768), which can collapse thin boxes; such boxes are kept
/// as-is rather than rejected.
pub fn quantize_half(dets: &[Detection]) -> Vec<Detection> {
    dets.iter()
        .map(|d| {
            let [r0, c0, r1, c1] = d.bbox.as_array().map(round_to_half);
            Detection {
                bbox: BBox::from_raw(r0, c0, r1, c1),
                confidence: round_to_half(d.confidence),
                class_id: d.class_id,
            }
        })
        .collect()
}
