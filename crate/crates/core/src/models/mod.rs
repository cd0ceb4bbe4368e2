//! The inference boundary.
//!
//! Segmentation models map an 8-bit patch to a probability patch of the same
//! size; detection models map a patch to boxes in patch pixels. The pipeline
//! functions here handle GSD adaptation, tiling, stitching and cross-tile NMS
//! so that models only ever see one patch at a time.

mod stubs;
mod subprocess;

pub use stubs::{BlobDetector, ThresholdSegmenter};
pub use subprocess::{SubprocessDetector, SubprocessSegmenter};

use thiserror::Error;

use crate::detection::{nms_bucketed, Detection};
use crate::geocore::{GeoError, Gsd};
use crate::par;
use crate::raster::{resample_to_gsd, GeoRaster, Grid, ProbabilityMap, RasterError, ResampleMethod};
use crate::tiler::{extract_tile, lift_detections, plan_tiles, stitch_masks, Blend, TileConfig, TileError};

/// Working GSD of the road segmentation model.
pub const ROAD_GSD_M: f64 = 0.50;
/// Working GSD of the building segmentation model.
pub const BUILDING_GSD_M: f64 = 0.20;
/// Default person-detector operating band in meters per pixel.
pub const PERSON_GSD_RANGE_M: (f64, f64) = (0.01, 0.06);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model {model} needs {required} m/px but the raster is {source_gsd} m/px; upsampling is not supported")]
    GsdTooCoarse {
        model: String,
        required: f64,
        source_gsd: f64,
    },
    #[error("model {model} accepts GSD in [{min}, {max}] m/px, raster is {gsd} m/px")]
    GsdOutOfRange {
        model: String,
        min: f64,
        max: f64,
        gsd: f64,
    },
    #[error("model {model}, tile {tile}: {message}")]
    BadOutput {
        model: String,
        tile: usize,
        message: String,
    },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("model {model}: {message}")]
    Subprocess { model: String, message: String },
    #[error(transparent)]
    Tile(#[from] TileError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Inclusive GSD interval in meters per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsdRange {
    min: f64,
    max: f64,
}

impl GsdRange {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        if !(min.is_finite() && max.is_finite() && min > 0.0 && min <= max) {
            return Err(ModelError::InvalidParameter(format!(
                "GSD range [{min}, {max}] must satisfy 0 < min <= max"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn person_default() -> Self {
        Self {
            min: PERSON_GSD_RANGE_M.0,
            max: PERSON_GSD_RANGE_M.1,
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }
    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contains(&self, gsd: Gsd) -> bool {
        let g = gsd.meters();
        let tol = crate::geocore::GSD_REL_TOLERANCE;
        g >= self.min * (1.0 - tol) && g <= self.max * (1.0 + tol)
    }
}

pub trait SegmentationModel: Send + Sync {
    fn name(&self) -> &str;
    fn required_gsd(&self) -> Gsd;
    /// Probability patch with the input's width and height, values in [0, 1].
    fn infer(&self, patch: &Grid<u8>) -> Result<Grid<f32>, ModelError>;
    /// `false` if `infer` must not be called concurrently.
    fn is_reentrant(&self) -> bool {
        true
    }
}

pub trait DetectionModel: Send + Sync {
    fn name(&self) -> &str;
    fn valid_gsd_range(&self) -> GsdRange;
    /// Boxes in patch pixel coordinates.
    fn infer(&self, patch: &Grid<u8>) -> Result<Vec<Detection>, ModelError>;
    fn is_reentrant(&self) -> bool {
        true
    }
}

fn run_tiles<T, F>(reentrant: bool, n: usize, f: F) -> Result<Vec<T>, ModelError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ModelError> + Sync + Send,
{
    let results = if reentrant {
        par::map_range(n, f)
    } else {
        par::map_range_sequential(n, f)
    };
    results.into_iter().collect()
}

/// Brings `raster` to the model's GSD (box-average downsampling if finer),
/// then runs tiled inference and max-stitches the patches.
pub fn run_segmentation(
    model: &dyn SegmentationModel,
    raster: &GeoRaster<u8>,
    tiles: TileConfig,
) -> Result<ProbabilityMap, ModelError> {
    let required = model.required_gsd();
    let source = raster.gsd()?;
    let resampled;
    let input = if source.approx_eq(required) {
        raster
    } else if source > required {
        return Err(ModelError::GsdTooCoarse {
            model: model.name().to_string(),
            required: required.meters(),
            source_gsd: source.meters(),
        });
    } else {
        resampled = resample_to_gsd(raster, required, ResampleMethod::BoxAverage)?;
        &resampled
    };

    let plan = plan_tiles(input.width(), input.height(), tiles)?;
    let patches = run_tiles(model.is_reentrant(), plan.len(), |i| {
        let tile = &plan.tiles()[i];
        let patch = extract_tile(input.grid(), tile)?;
        let out = model.infer(&patch)?;
        let bad = |message: String| ModelError::BadOutput {
            model: model.name().to_string(),
            tile: i,
            message,
        };
        if out.width() != patch.width() || out.height() != patch.height() || out.channels() != 1 {
            return Err(bad(format!(
                "output {}x{}x{} does not match patch {}x{}",
                out.width(),
                out.height(),
                out.channels(),
                patch.width(),
                patch.height()
            )));
        }
        if let Some(v) = out.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(format!("probability {v} outside [0, 1]")));
        }
        Ok(out)
    })?;
    Ok(stitch_masks(&plan, &patches, *input.transform(), Blend::Max)?)
}

/// Tiled detection with cross-tile NMS. Output is in image pixels, ordered
/// by descending confidence.
pub fn run_detection(
    model: &dyn DetectionModel,
    raster: &GeoRaster<u8>,
    tiles: TileConfig,
    nms_threshold: f64,
) -> Result<Vec<Detection>, ModelError> {
    let range = model.valid_gsd_range();
    let gsd = raster.gsd()?;
    if !range.contains(gsd) {
        return Err(ModelError::GsdOutOfRange {
            model: model.name().to_string(),
            min: range.min(),
            max: range.max(),
            gsd: gsd.meters(),
        });
    }
    if !(nms_threshold > 0.0 && nms_threshold < 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "NMS threshold {nms_threshold} outside (0, 1)"
        )));
    }
    let plan = plan_tiles(raster.width(), raster.height(), tiles)?;
    let per_tile = run_tiles(model.is_reentrant(), plan.len(), |i| {
        let patch = extract_tile(raster.grid(), &plan.tiles()[i])?;
        model.infer(&patch)
    })?;
    let lifted = lift_detections(&plan, &per_tile)?;
    Ok(nms_bucketed(&lifted, nms_threshold, 0.0))
}
