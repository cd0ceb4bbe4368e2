use super::{DetectionModel, GsdRange, ModelError, SegmentationModel};
use crate::detection::Detection;
use crate::geocore::Gsd;
use crate::raster::Grid;

/// Per-pixel threshold on one channel: 1 where `sample > threshold`, else 0.
#[derive(Debug, Clone)]
pub struct ThresholdSegmenter {
    channel: usize,
    threshold: u8,
    required_gsd: Gsd,
    name: String,
}

impl ThresholdSegmenter {
    pub fn new(channel: usize, threshold: u8, required_gsd: Gsd) -> Self {
        Self {
            channel,
            threshold,
            required_gsd,
            name: format!("threshold(ch={channel},thr={threshold})"),
        }
    }
}

impl SegmentationModel for ThresholdSegmenter {
    fn name(&self) -> &str {
        &self.name
    }

    fn required_gsd(&self) -> Gsd {
        self.required_gsd
    }

    fn infer(&self, patch: &Grid<u8>) -> Result<Grid<f32>, ModelError> {
        if self.channel >= patch.channels() {
            return Err(ModelError::InvalidParameter(format!(
                "channel {} requested from a {}-channel patch",
                self.channel,
                patch.channels()
            )));
        }
        let thr = self.threshold;
        let ch = self.channel;
        Ok(Grid::from_fn(patch.width(), patch.height(), |r, c| {
            if patch.get(r, c, ch) > thr {
                1.0
            } else {
                0.0
            }
        })?)
    }
}

/// One box per 4-connected component of pixels brighter than `threshold`
/// whose area lies in `[min_area, max_area]`. Intensity is the channel mean.
#[derive(Debug, Clone)]
pub struct BlobDetector {
    threshold: u8,
    min_area: usize,
    max_area: usize,
    valid_gsd: GsdRange,
}

impl BlobDetector {
    pub fn new(threshold: u8, min_area: usize, max_area: usize) -> Result<Self, ModelError> {
        if min_area == 0 || min_area > max_area {
            return Err(ModelError::InvalidParameter(format!(
                "blob area range [{min_area}, {max_area}] must satisfy 1 <= min <= max"
            )));
        }
        Ok(Self {
            threshold,
            min_area,
            max_area,
            valid_gsd: GsdRange::person_default(),
        })
    }

    pub fn with_gsd_range(mut self, range: GsdRange) -> Self {
        self.valid_gsd = range;
        self
    }
}

fn intensity(patch: &Grid<u8>, r: usize, c: usize) -> f64 {
    let ch = patch.channels();
    (0..ch).map(|k| patch.get(r, c, k) as f64).sum::<f64>() / ch as f64
}

impl DetectionModel for BlobDetector {
    fn name(&self) -> &str {
        "blob"
    }

    fn valid_gsd_range(&self) -> GsdRange {
        self.valid_gsd
    }

    fn infer(&self, patch: &Grid<u8>) -> Result<Vec<Detection>, ModelError> {
        let (w, h) = (patch.width(), patch.height());
        let values: Vec<f64> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| intensity(patch, r, c))
            .collect();
        let thr = self.threshold as f64;
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        let mut out = Vec::new();
        for start in 0..w * h {
            if seen[start] || values[start] <= thr {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut rmin, mut cmin, mut rmax, mut cmax) = (usize::MAX, usize::MAX, 0, 0);
            let (mut area, mut sum) = (0usize, 0.0f64);
            while let Some(i) = stack.pop() {
                let (r, c) = (i / w, i % w);
                area += 1;
                sum += values[i];
                rmin = rmin.min(r);
                rmax = rmax.max(r);
                cmin = cmin.min(c);
                cmax = cmax.max(c);
                let mut visit = |j: usize| {
                    if !seen[j] && values[j] > thr {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if r > 0 {
                    visit(i - w);
                }
                if r + 1 < h {
                    visit(i + w);
                }
                if c > 0 {
                    visit(i - 1);
                }
                if c + 1 < w {
                    visit(i + 1);
                }
            }
            if area < self.min_area || area > self.max_area {
                continue;
            }
            let conf = (sum / area as f64 / 255.0).clamp(0.0, 1.0);
            out.push(
                Detection::from_coords(
                    rmin as f64,
                    cmin as f64,
                    (rmax + 1) as f64,
                    (cmax + 1) as f64,
                    conf,
                )
                .map_err(|e| ModelError::InvalidParameter(e.to_string()))?,
            );
        }
        Ok(out)
    }
}
