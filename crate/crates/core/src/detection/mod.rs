//! Axis-aligned detections: box algebra, NMS, reduced precision and geolocation.
//!
//! Boxes are `(row0, col0, row1, col1)` in fractional pixel coordinates of the
//! image they were detected in, `row0 < row1` and `col0 < col1`.

mod nms;
mod quantize;

pub use nms::{nms_bucketed, nms_greedy, rank_order};
pub use quantize::{quantize_half, round_to_half};

use std::cmp::Ordering;

use thiserror::Error;

use crate::geocore::{GeoTransform, PixelCoord, WorldCoord};

/// Class id used for persons, the only class handled here.
pub const PERSON_CLASS: u16 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("box ({0}, {1}, {2}, {3}) must be finite with row0 < row1 and col0 < col1")]
    InvalidBox(f64, f64, f64, f64),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    row0: f64,
    col0: f64,
    row1: f64,
    col1: f64,
}

impl BBox {
    pub fn new(row0: f64, col0: f64, row1: f64, col1: f64) -> Result<Self, DetectionError> {
        let finite = [row0, col0, row1, col1].iter().all(|v| v.is_finite());
        if !finite || row0 >= row1 || col0 >= col1 {
            return Err(DetectionError::InvalidBox(row0, col0, row1, col1));
        }
        Ok(Self {
            row0,
            col0,
            row1,
            col1,
        })
    }

    /// No ordering check; reduced-precision rounding may collapse a box to zero area.
    pub(crate) fn from_raw(row0: f64, col0: f64, row1: f64, col1: f64) -> Self {
        Self {
            row0,
            col0,
            row1,
            col1,
        }
    }

    pub fn row0(&self) -> f64 {
        self.row0
    }
    pub fn col0(&self) -> f64 {
        self.col0
    }
    pub fn row1(&self) -> f64 {
        self.row1
    }
    pub fn col1(&self) -> f64 {
        self.col1
    }

    pub fn height(&self) -> f64 {
        self.row1 - self.row0
    }
    pub fn width(&self) -> f64 {
        self.col1 - self.col0
    }
    pub fn area(&self) -> f64 {
        self.height().max(0.0) * self.width().max(0.0)
    }

    pub fn center(&self) -> PixelCoord {
        PixelCoord::new(0.5 * (self.row0 + self.row1), 0.5 * (self.col0 + self.col1))
    }

    pub fn translate(&self, drow: f64, dcol: f64) -> Self {
        Self {
            row0: self.row0 + drow,
            col0: self.col0 + dcol,
            row1: self.row1 + drow,
            col1: self.col1 + dcol,
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let h = self.row1.min(other.row1) - self.row0.max(other.row0);
        let w = self.col1.min(other.col1) - self.col0.max(other.col0);
        if h <= 0.0 || w <= 0.0 {
            0.0
        } else {
            h * w
        }
    }

    /// `true` when the box lies inside `[0, height] x [0, width]`.
    pub fn within(&self, height: f64, width: f64) -> bool {
        self.row0 >= 0.0 && self.col0 >= 0.0 && self.row1 <= height && self.col1 <= width
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.row0, self.col0, self.row1, self.col1]
    }
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: u16,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DetectionError::InvalidConfidence(confidence));
        }
        Ok(Self {
            bbox,
            confidence,
            class_id: PERSON_CLASS,
        })
    }

    /// Convenience for literals: `Detection::from_coords(r0, c0, r1, c1, conf)`.
    pub fn from_coords(
        row0: f64,
        col0: f64,
        row1: f64,
        col1: f64,
        confidence: f64,
    ) -> Result<Self, DetectionError> {
        Self::new(BBox::new(row0, col0, row1, col1)?, confidence)
    }

    pub fn translated(&self, drow: f64, dcol: f64) -> Self {
        Self {
            bbox: self.bbox.translate(drow, dcol),
            ..*self
        }
    }

    /// Confidence descending, then row0, col0, row1, col1 ascending.
    pub fn rank_cmp(&self, other: &Detection) -> Ordering {
        other
            .confidence
            .total_cmp(&self.confidence)
            .then(self.bbox.row0.total_cmp(&other.bbox.row0))
            .then(self.bbox.col0.total_cmp(&other.bbox.col0))
            .then(self.bbox.row1.total_cmp(&other.bbox.row1))
            .then(self.bbox.col1.total_cmp(&other.bbox.col1))
    }
}

/// A detection placed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoDetection {
    pub center: WorldCoord,
    pub width_m: f64,
    pub height_m: f64,
    pub confidence: f64,
    pub class_id: u16,
}

pub fn geolocate(dets: &[Detection], transform: &GeoTransform) -> Vec<GeoDetection> {
    let sx = transform.pixel_size_x().abs();
    let sy = transform.pixel_size_y().abs();
    dets.iter()
        .map(|d| GeoDetection {
            center: transform.pixel_to_world(d.bbox.center()),
            width_m: d.bbox.width() * sx,
            height_m: d.bbox.height() * sy,
            confidence: d.confidence,
            class_id: d.class_id,
        })
        .collect()
}

/// Parses the line-oriented detection list: `row0 col0 row1 col1 confidence`
/// per line. Blank lines and `#` comments are skipped. A missing confidence
/// column reads as 1.0 (ground-truth files).
pub fn parse_detection_list(text: &str) -> Result<Vec<Detection>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err((i + 1, format!("expected 4 or 5 fields, found {}", fields.len())));
        }
        let mut v = [1.0f64; 5];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| (i + 1, format!("cannot parse {f:?} as a number")))?;
        }
        let det = Detection::from_coords(v[0], v[1], v[2], v[3], v[4])
            .map_err(|e| (i + 1, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}

pub fn format_detection_list(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let [r0, c0, r1, c1] = d.bbox.as_array();
        s.push_str(&format!("{r0} {c0} {r1} {c1} {}\n", d.confidence));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocore::Gsd;

    fn b(r0: f64, c0: f64, r1: f64, c1: f64) -> BBox {
        BBox::new(r0, c0, r1, c1).unwrap()
    }

    #[test]
    fn iou_cases() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &b(2.0, 0.0, 3.0, 2.0)), 0.0); // touching edge
        let v = iou(&a, &b(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 3.0, 1.0, 2.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 2.0).is_err());
        assert!(Detection::new(b(0.0, 0.0, 1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn geolocate_example() {
        let t = GeoTransform::north_up(WorldCoord::new(100.0, 200.0), Gsd::new(0.5).unwrap());
        let d = Detection::from_coords(0.0, 0.0, 2.0, 2.0, 0.9).unwrap();
        let g = geolocate(&[d], &t);
        assert_eq!(g[0].center, WorldCoord::new(100.5, 199.5));
        assert_eq!((g[0].width_m, g[0].height_m), (1.0, 1.0));
        let id = geolocate(&[d], &GeoTransform::identity());
        assert_eq!(id[0].center, WorldCoord::new(1.0, -1.0));
    }

    #[test]
    fn geolocate_commutes_with_translation() {
        let t = GeoTransform::north_up(WorldCoord::new(-12.5, 40.0), Gsd::new(0.03).unwrap());
        let d = Detection::from_coords(3.0, 7.5, 21.0, 19.0, 0.7).unwrap();
        let (row0, col0) = (374.0, 748.0);
        let lifted = geolocate(&[d.translated(row0, col0)], &t)[0];
        let in_tile = geolocate(&[d], &t.shifted(row0, col0))[0];
        assert!((lifted.center.x - in_tile.center.x).abs() < 1e-9);
        assert!((lifted.center.y - in_tile.center.y).abs() < 1e-9);
        assert_eq!(lifted.width_m, in_tile.width_m);
    }

    #[test]
    fn detection_list_text() {
        let text = "# r0 c0 r1 c1 conf\n1 2 3 4 0.5\n\n10 10 20 20\n";
        let d = parse_detection_list(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].confidence, 1.0);
        let again = parse_detection_list(&format_detection_list(&d)).unwrap();
        assert_eq!(again, d);
        assert_eq!(parse_detection_list("1 2 3\n").unwrap_err().0, 1);
        assert_eq!(parse_detection_list("\n1 2 0 4 0.5\n").unwrap_err().0, 2);
    }
}
