//! Defaults shared by all subcommands, optionally overridden by a TOML file
//! named in `DROPSIGHT_CONFIG`.
//!
//! ```toml
//! [tile]
//! size = 416
//! overlap = 0.10
//!
//! [detection]
//! nms_iou = 0.5
//! match_iou = 0.5
//! blob_threshold = 128
//! blob_min_area = 4
//!
//! [segmentation]
//! threshold = 128
//! mask_threshold = 0.5
//!
//! [road]
//! buffer_m = 2.0
//!
//! [station]
//! port = 8080
//! linger_s = 5.0
//! ```

use std::path::Path;

use serde::Deserialize;

pub const CONFIG_ENV: &str = "DROPSIGHT_CONFIG";

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TileDefaults {
    pub size: usize,
    pub overlap: f64,
}

impl Default for TileDefaults {
    fn default() -> Self {
        Self {
            size: 416,
            overlap: 0.10,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionDefaults {
    pub nms_iou: f64,
    pub match_iou: f64,
    pub blob_threshold: u8,
    pub blob_min_area: usize,
}

impl Default for DetectionDefaults {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            match_iou: dropsight::evalsuite::DEFAULT_MATCH_IOU,
            blob_threshold: 128,
            blob_min_area: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationDefaults {
    pub threshold: u8,
    pub mask_threshold: f32,
}

impl Default for SegmentationDefaults {
    fn default() -> Self {
        Self {
            threshold: 128,
            mask_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RoadDefaults {
    pub buffer_m: f64,
}

impl Default for RoadDefaults {
    fn default() -> Self {
        Self {
            buffer_m: dropsight::evalsuite::DEFAULT_BUFFER_M,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StationDefaults {
    pub port: u16,
    /// Seconds the bridge keeps serving after a simulation ends.
    pub linger_s: f64,
}

impl Default for StationDefaults {
    fn default() -> Self {
        Self {
            port: 8080,
            linger_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tile: TileDefaults,
    pub detection: DetectionDefaults,
    pub segmentation: SegmentationDefaults,
    pub road: RoadDefaults,
    pub station: StationDefaults,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Built-in defaults, or the file named by `DROPSIGHT_CONFIG` if set.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}
