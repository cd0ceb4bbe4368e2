//! Evaluation metrics for road, building and person outputs.

mod det;
mod distance;
mod road;
mod seg;
mod thinning;

pub mod report;

pub use det::{average_precision, det_metrics, match_detections, DetMatch, DetMetrics, DEFAULT_MATCH_IOU};
pub use distance::squared_edt;
pub use road::{
    buffer_radius_sq, matched_within, parse_polylines, quality_from_cc, rasterize_polylines, road_metrics,
    road_metrics_from_masks, Polyline, RoadCounts, RoadMetrics, DEFAULT_BUFFER_M,
};
pub use seg::{seg_metrics, SegMetrics};
pub use thinning::{blocks_2x2, count_components8, thin_mask};

use thiserror::Error;

use crate::geocore::GeoError;
use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and reference are on different grids")]
    GridMismatch,
    #[error("{0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}
