//! Topological road metrics: completeness, correctness and quality of a
//! thinned prediction against reference centerlines, matched within a buffer.

use super::distance::squared_edt;
use super::thinning::thin_mask;
use super::EvalError;
use crate::geocore::{GeoTransform, WorldCoord};
use crate::raster::BinaryMask;

/// Default matching buffer in meters.
pub const DEFAULT_BUFFER_M: f64 = 2.0;

pub type Polyline = Vec<WorldCoord>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadMetrics {
    /// `None` when the reference is empty.
    pub completeness: Option<f64>,
    /// `None` when the thinned prediction is empty.
    pub correctness: Option<f64>,
    /// `None` when both are empty.
    pub quality: Option<f64>,
    pub matched_pred_len: f64,
    pub pred_len: f64,
    pub matched_ref_len: f64,
    pub ref_len: f64,
    pub buffer_m: f64,
    pub gsd_m: f64,
    pub counts: RoadCounts,
}

/// Pixel counts behind [`RoadMetrics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoadCounts {
    pub matched_pred: usize,
    pub pred: usize,
    pub matched_ref: usize,
    pub reference: usize,
}

impl RoadCounts {
    fn ratios(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let unmatched_ref = self.reference - self.matched_ref;
        (
            ratio(self.matched_ref, self.reference),
            ratio(self.matched_pred, self.pred),
            ratio(self.matched_pred, self.pred + unmatched_ref),
        )
    }
}

impl RoadMetrics {
    fn from_counts(counts: RoadCounts, gsd_m: f64, buffer_m: f64) -> Self {
        let (completeness, correctness, quality) = counts.ratios();
        Self {
            completeness,
            correctness,
            quality,
            matched_pred_len: counts.matched_pred as f64 * gsd_m,
            pred_len: counts.pred as f64 * gsd_m,
            matched_ref_len: counts.matched_ref as f64 * gsd_m,
            ref_len: counts.reference as f64 * gsd_m,
            buffer_m,
            gsd_m,
            counts,
        }
    }

    /// Pools several scenes by summing lengths. Scenes must share GSD and buffer.
    pub fn pooled(scenes: &[RoadMetrics]) -> Option<RoadMetrics> {
        let first = scenes.first()?;
        let mut c = RoadCounts::default();
        for s in scenes {
            if s.gsd_m != first.gsd_m || s.buffer_m != first.buffer_m {
                return None;
            }
            c.matched_pred += s.counts.matched_pred;
            c.pred += s.counts.pred;
            c.matched_ref += s.counts.matched_ref;
            c.reference += s.counts.reference;
        }
        Some(Self::from_counts(c, first.gsd_m, first.buffer_m))
    }
}

/// Quality implied by completeness and correctness when matched lengths on
/// both sides are equal. 0 if either input is 0.
pub fn quality_from_cc(completeness: f64, correctness: f64) -> f64 {
    if completeness <= 0.0 || correctness <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / completeness + 1.0 / correctness - 1.0)
}

/// Clips a pixel-space segment to `[lo_r, hi_r] x [lo_c, hi_c]` (Liang-Barsky).
fn clip(a: (f64, f64), b: (f64, f64), hi_r: f64, hi_c: f64) -> Option<((f64, f64), (f64, f64))> {
    let (lo_r, lo_c) = (-0.5, -0.5);
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-dr, a.0 - lo_r), (dr, hi_r - a.0), (-dc, a.1 - lo_c), (dc, hi_c - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t0 <= t1).then_some(((a.0 + t0 * dr, a.1 + t0 * dc), (a.0 + t1 * dr, a.1 + t1 * dc)))
}

fn bresenham(mask: &mut BinaryMask, (r0, c0): (i64, i64), (r1, c1): (i64, i64)) {
    let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
    let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
    let (mut r, mut c, mut err) = (r0, c0, dr + dc);
    loop {
        if r >= 0 && c >= 0 && (r as usize) < mask.height() && (c as usize) < mask.width() {
            mask.set(r as usize, c as usize, true);
        }
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
}

/// Draws polylines 1 px wide onto an empty mask of the given grid. Segments
/// are clipped to the raster extent, endpoints rounded to the nearest pixel
/// center, then joined with Bresenham lines.
pub fn rasterize_polylines(
    lines: &[Polyline],
    width: usize,
    height: usize,
    transform: &GeoTransform,
) -> Result<BinaryMask, EvalError> {
    let mut mask = BinaryMask::empty(width, height, *transform)?;
    let (hi_r, hi_c) = (height as f64 - 0.5, width as f64 - 0.5);
    let to_px = |w: &WorldCoord| {
        let p = transform.world_to_pixel(*w);
        (p.row, p.col)
    };
    let round = |(r, c): (f64, f64)| (r.round() as i64, c.round() as i64);
    for line in lines {
        if let [only] = line.as_slice() {
            let p = to_px(only);
            if let Some((a, _)) = clip(p, p, hi_r, hi_c) {
                bresenham(&mut mask, round(a), round(a));
            }
        }
        for seg in line.windows(2) {
            if let Some((a, b)) = clip(to_px(&seg[0]), to_px(&seg[1]), hi_r, hi_c) {
                bresenham(&mut mask, round(a), round(b));
            }
        }
    }
    Ok(mask)
}

/// Pixels of `from` lying within `radius_sq` (squared pixels) of any pixel of `to`.
pub fn matched_within(from: &BinaryMask, to: &BinaryMask, radius_sq: f64) -> BinaryMask {
    let (w, h) = (from.width(), from.height());
    let features: Vec<bool> = (0..w * h).map(|i| to.get(i / w, i % w)).collect();
    let d2 = squared_edt(w, h, &features);
    BinaryMask::from_fn(w, h, *from.transform(), |r, c| from.get(r, c) && d2[r * w + c] <= radius_sq)
        .expect("shape of a valid mask")
}

/// Squared buffer radius in pixels.
pub fn buffer_radius_sq(buffer_m: f64, gsd_m: f64) -> f64 {
    let r = buffer_m / gsd_m;
    r * r
}

/// Evaluates an already-thinned prediction against a reference raster.
pub fn road_metrics_from_masks(skeleton: &BinaryMask, reference: &BinaryMask, buffer_m: f64) -> Result<RoadMetrics, EvalError> {
    if !skeleton.same_grid(reference) {
        return Err(EvalError::GridMismatch);
    }
    if !(buffer_m.is_finite() && buffer_m > 0.0) {
        return Err(EvalError::InvalidParameter(format!("buffer {buffer_m} m must be positive")));
    }
    let gsd = skeleton.transform().gsd()?.meters();
    let r2 = buffer_radius_sq(buffer_m, gsd);
    let matched_pred = matched_within(skeleton, reference, r2).count_ones();
    let matched_ref = matched_within(reference, skeleton, r2).count_ones();
    let counts = RoadCounts {
        matched_pred,
        pred: skeleton.count_ones(),
        matched_ref,
        reference: reference.count_ones(),
    };
    Ok(RoadMetrics::from_counts(counts, gsd, buffer_m))
}

/// Thins `pred`, rasterizes `reference` onto the same grid and matches both
/// within `buffer_m`.
pub fn road_metrics(pred: &BinaryMask, reference: &[Polyline], buffer_m: f64) -> Result<RoadMetrics, EvalError> {
    let ref_mask = rasterize_polylines(reference, pred.width(), pred.height(), pred.transform())?;
    let skeleton = thin_mask(pred);
    road_metrics_from_masks(&skeleton, &ref_mask, buffer_m)
}

/// Parses centerlines: one polyline per line as `x,y x,y ...` in world
/// coordinates. Blank lines and `#` comments are skipped.
pub fn parse_polylines(text: &str) -> Result<Vec<Polyline>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut pts = Vec::new();
        for tok in line.split_whitespace() {
            let (x, y) = tok
                .split_once(',')
                .ok_or_else(|| (i + 1, format!("expected x,y but found {tok:?}")))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| (i + 1, format!("cannot parse {s:?} as a coordinate")))
            };
            pts.push(WorldCoord::new(num(x)?, num(y)?));
        }
        out.push(pts);
    }
    Ok(out)
}
