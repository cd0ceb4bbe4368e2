//! Drone-imagery processing for disaster assessment and aid delivery.
//!
//! The crate covers the whole path from a georeferenced mosaic to a release
//! decision over the drop zone:
//!
//! * [`geocore`]: north-up affine georeferencing, world-file sidecars, GSD and
//!   acquisition/throughput arithmetic.
//! * [`raster`]: pixel grids with an attached transform, PNM/PFM/PNG I/O and
//!   downsampling to a model's working GSD.
//! * [`tiler`]: overlapping patch layout, max-blend stitching and lifting of
//!   per-tile detections into image coordinates.
//! * [`models`]: the inference boundary (segmentation and detection traits),
//!   deterministic stub models and a subprocess adapter.
//! * [`detection`]: box algebra, greedy and grid-bucketed NMS, binary16
//!   quantization and geolocation.
//! * [`evalsuite`]: thinning, exact distance transform, topological road
//!   metrics, pixel segmentation metrics, detection matching and AP.
//! * [`telemetry`]: the framed little-endian wire protocol and its JSON mirror.
//! * [`mission`]: drop-zone assessment, the delivery state machine and the
//!   deterministic scenario simulator.
//!
//! Data-parallel loops (tile inference, stitching, resampling, distance
//! transforms) run on rayon when the default `parallel` feature is enabled and
//! fall back to plain iteration otherwise. Results are identical either way.

pub mod detection;
pub mod evalsuite;
pub mod geocore;
pub mod mission;
pub mod models;
pub mod par;
pub mod raster;
pub mod telemetry;
pub mod tiler;

pub use detection::{BBox, Detection, GeoDetection};
pub use geocore::{GeoTransform, Gsd, PixelCoord, WorldCoord};
pub use raster::{BinaryMask, GeoRaster, Grid};
pub use tiler::{TileConfig, TilePlan};
