//! Drop-zone safety and the delivery decision loop.
//!
//! [`assess_drop_zone`] turns geolocated detections into a verdict,
//! [`MissionMachine`] advances the delivery state from verdicts, operator
//! commands and link events, and [`Simulator`] replays a scenario file on a
//! simulated clock.

mod machine;
mod scenario;
mod sim;

pub use machine::{Event, MissionMachine, StepError, Transition};
pub use scenario::{parse_scenario, PersonTrack, Scenario, ScenarioError};
pub use sim::{run_simulation, LogRecord, MissionLog, Outcome, Simulator};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detection::GeoDetection;
use crate::geocore::WorldCoord;

pub const DEFAULT_SAFETY_RADIUS_M: f64 = 30.0;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.3;
pub const DEFAULT_CLEAR_FRAMES: u32 = 3;
pub const DEFAULT_FRAME_DEADLINE_S: f64 = 2.0;
/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MissionState {
    Enroute,
    Assessing,
    AwaitingOperator,
    ReleaseCleared,
    Released,
    Aborted,
}

impl MissionState {
    pub const ALL: [MissionState; 6] = [
        Self::Enroute,
        Self::Assessing,
        Self::AwaitingOperator,
        Self::ReleaseCleared,
        Self::Released,
        Self::Aborted,
    ];

    /// Wire code used in `MissionStatus` frames.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Released | Self::Aborted)
    }
}

impl fmt::Display for MissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Release needs an operator command over the link.
    Piloted,
    #[default]
    Autonomous,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "piloted" => Ok(Self::Piloted),
            "autonomous" => Ok(Self::Autonomous),
            _ => Err(format!("unknown mode {s:?} (expected piloted or autonomous)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Piloted => "piloted",
            Self::Autonomous => "autonomous",
        })
    }
}

/// What a piloted mission does once the operator link is gone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkLossPolicy {
    #[default]
    Abort,
    /// Continue as if autonomous.
    Autonomous,
}

/// Which part of a detection must stay out of the safety circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SafetyTest {
    #[default]
    Center,
    /// Any point of the axis-aligned footprint.
    Footprint,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ZoneError {
    #[error("safety radius must be finite and > 0, got {0}")]
    Radius(f64),
    #[error("min confidence must lie in [0, 1], got {0}")]
    MinConfidence(f64),
    #[error("required clear frames must be >= 1")]
    ClearFrames,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropZone {
    drop_point: WorldCoord,
    safety_radius_m: f64,
    min_confidence: f64,
    required_clear_frames: u32,
    test: SafetyTest,
}

impl DropZone {
    pub fn new(
        drop_point: WorldCoord,
        safety_radius_m: f64,
        min_confidence: f64,
        required_clear_frames: u32,
    ) -> Result<Self, ZoneError> {
        if !(safety_radius_m.is_finite() && safety_radius_m > 0.0) {
            return Err(ZoneError::Radius(safety_radius_m));
        }
        if !(0.0..=1.0).contains(&min_confidence) {
            return Err(ZoneError::MinConfidence(min_confidence));
        }
        if required_clear_frames == 0 {
            return Err(ZoneError::ClearFrames);
        }
        Ok(Self {
            drop_point,
            safety_radius_m,
            min_confidence,
            required_clear_frames,
            test: SafetyTest::Center,
        })
    }

    /// Zone at `drop_point` with the default radius, confidence and dwell.
    pub fn with_defaults(drop_point: WorldCoord) -> Self {
        Self::new(drop_point, DEFAULT_SAFETY_RADIUS_M, DEFAULT_MIN_CONFIDENCE, DEFAULT_CLEAR_FRAMES)
            .expect("defaults are valid")
    }

    pub fn with_test(mut self, test: SafetyTest) -> Self {
        self.test = test;
        self
    }

    pub fn drop_point(&self) -> WorldCoord {
        self.drop_point
    }
    pub fn safety_radius_m(&self) -> f64 {
        self.safety_radius_m
    }
    pub fn min_confidence(&self) -> f64 {
        self.min_confidence
    }
    pub fn required_clear_frames(&self) -> u32 {
        self.required_clear_frames
    }
    pub fn test(&self) -> SafetyTest {
        self.test
    }

    /// Distance used by the safety test: center distance, or distance to the
    /// nearest footprint point.
    pub fn test_distance(&self, d: &GeoDetection) -> f64 {
        match self.test {
            SafetyTest::Center => d.center.distance(&self.drop_point),
            SafetyTest::Footprint => {
                let dx = ((d.center.x - self.drop_point.x).abs() - d.width_m / 2.0).max(0.0);
                let dy = ((d.center.y - self.drop_point.y).abs() - d.height_m / 2.0).max(0.0);
                dx.hypot(dy)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offender {
    pub detection: GeoDetection,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SafetyVerdict {
    Safe,
    /// Offending detections, nearest first.
    Unsafe(Vec<Offender>),
}

impl SafetyVerdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, Self::Safe)
    }
}

/// Unsafe iff a detection with confidence >= `min_confidence` lies strictly
/// inside the safety radius. A detection exactly on the circle is safe.
pub fn assess_drop_zone(dets: &[GeoDetection], zone: &DropZone) -> SafetyVerdict {
    let mut offenders: Vec<Offender> = dets
        .iter()
        .filter(|d| d.confidence >= zone.min_confidence)
        .map(|d| Offender {
            detection: *d,
            distance_m: zone.test_distance(d),
        })
        .filter(|o| o.distance_m < zone.safety_radius_m)
        .collect();
    if offenders.is_empty() {
        return SafetyVerdict::Safe;
    }
    offenders.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m));
    SafetyVerdict::Unsafe(offenders)
}

/// Equirectangular projection about a geographic reference point. `x` is
/// east and `y` north, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    lat0_deg: f64,
    lon0_deg: f64,
    cos_lat0: f64,
}

impl LocalFrame {
    pub fn new(lat0_deg: f64, lon0_deg: f64) -> Self {
        Self {
            lat0_deg,
            lon0_deg,
            cos_lat0: lat0_deg.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.lat0_deg, self.lon0_deg)
    }

    /// `(lat, lon)` in degrees.
    pub fn to_geo(&self, p: WorldCoord) -> (f64, f64) {
        let lat = self.lat0_deg + (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon0_deg + (p.x / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees();
        (lat, lon)
    }

    pub fn to_local(&self, lat_deg: f64, lon_deg: f64) -> WorldCoord {
        WorldCoord::new(
            (lon_deg - self.lon0_deg).to_radians() * EARTH_RADIUS_M * self.cos_lat0,
            (lat_deg - self.lat0_deg).to_radians() * EARTH_RADIUS_M,
        )
    }
}

/// Per-frame processing deadline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBudget {
    pub deadline_s: f64,
}

impl Default for FrameBudget {
    fn default() -> Self {
        Self {
            deadline_s: DEFAULT_FRAME_DEADLINE_S,
        }
    }
}

impl FrameBudget {
    pub fn is_late(&self, processing_s: f64) -> bool {
        processing_s > self.deadline_s
    }
}
