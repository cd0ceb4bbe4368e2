//! Line-oriented scenario files.
//!
//! ```text
//! # autonomous drop, one person walking east out of the zone
//! mode autonomous
//! seed 7
//! frames 12
//! drop 0 0
//! geo 48.1 11.5
//! zone 30 0.3 3
//! camera 1100 1100 0.06
//! person p1 0 11 0 0 66 0
//! ```
//!
//! Directives (one per line, `#` starts a comment):
//!
//! | directive | arguments | default |
//! |---|---|---|
//! | `mode` | `piloted` or `autonomous` | autonomous |
//! | `seed` | u64 | 0 |
//! | `frames` | frame count | 20 |
//! | `frame_rate` | Hz | 2 |
//! | `start_ms` | unix time of frame 0 | 0 |
//! | `drop` | x y (local meters) | 0 0 |
//! | `geo` | lat lon of the drop point (degrees) | 0 0 |
//! | `zone` | radius_m min_confidence clear_frames | 30 0.3 3 |
//! | `safety` | `center` or `footprint` | center |
//! | `budget` | per-frame deadline, s | 2.0 |
//! | `processing` | s per megapixel, jitter s | 0.125 0 |
//! | `camera` | width height gsd_m | 1100 1100 0.06 |
//! | `noise` | pixel noise amplitude 0-255 | 0 |
//! | `arrive` | frame of arrival at the drop point | 0 |
//! | `timeout` | assessment timeout, s | 30 |
//! | `operator_timeout` | s, or `none` | none |
//! | `link_policy` | `abort` or `autonomous` | abort |
//! | `link_lost` | frame | none |
//! | `late` | frame [processing s] | 1.5 × budget |
//! | `operator` | frame `release` or `abort` | |
//! | `person` | id from to x0 y0 [x1 y1] [size=m] [intensity=v] | size 0.6, intensity 220 |
//!
//! A person exists in frames `from..=to` and moves linearly from `(x0, y0)`
//! to `(x1, y1)` over that span.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use super::{
    LinkLossPolicy, Mode, SafetyTest, DEFAULT_CLEAR_FRAMES, DEFAULT_FRAME_DEADLINE_S, DEFAULT_MIN_CONFIDENCE,
    DEFAULT_SAFETY_RADIUS_M,
};
use crate::geocore::WorldCoord;
use crate::telemetry::Command;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonTrack {
    pub id: String,
    pub from_frame: u32,
    pub to_frame: u32,
    pub start: WorldCoord,
    pub end: WorldCoord,
    pub size_m: f64,
    pub intensity: u8,
}

impl PersonTrack {
    pub fn position(&self, frame: u32) -> Option<WorldCoord> {
        if frame < self.from_frame || frame > self.to_frame {
            return None;
        }
        let span = (self.to_frame - self.from_frame) as f64;
        let s = if span == 0.0 {
            0.0
        } else {
            (frame - self.from_frame) as f64 / span
        };
        Some(WorldCoord::new(
            self.start.x + s * (self.end.x - self.start.x),
            self.start.y + s * (self.end.y - self.start.y),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub seed: u64,
    pub frames: u32,
    pub frame_rate_hz: f64,
    pub start_ms: u64,
    pub drop_point: WorldCoord,
    pub geo_ref: (f64, f64),
    pub safety_radius_m: f64,
    pub min_confidence: f64,
    pub required_clear_frames: u32,
    pub safety_test: SafetyTest,
    pub budget_s: f64,
    pub seconds_per_mp: f64,
    pub jitter_s: f64,
    pub camera_width: usize,
    pub camera_height: usize,
    pub camera_gsd_m: f64,
    pub noise: u8,
    pub arrive_frame: u32,
    pub assess_timeout_s: f64,
    pub operator_timeout_s: Option<f64>,
    pub link_policy: LinkLossPolicy,
    pub link_lost_frame: Option<u32>,
    /// Forced processing time per frame.
    pub late: BTreeMap<u32, f64>,
    pub operator: Vec<(u32, Command)>,
    pub persons: Vec<PersonTrack>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mode: Mode::Autonomous,
            seed: 0,
            frames: 20,
            frame_rate_hz: 2.0,
            start_ms: 0,
            drop_point: WorldCoord::default(),
            geo_ref: (0.0, 0.0),
            safety_radius_m: DEFAULT_SAFETY_RADIUS_M,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            required_clear_frames: DEFAULT_CLEAR_FRAMES,
            safety_test: SafetyTest::Center,
            budget_s: DEFAULT_FRAME_DEADLINE_S,
            seconds_per_mp: 0.125,
            jitter_s: 0.0,
            camera_width: 1100,
            camera_height: 1100,
            camera_gsd_m: 0.06,
            noise: 0,
            arrive_frame: 0,
            assess_timeout_s: 30.0,
            operator_timeout_s: None,
            link_policy: LinkLossPolicy::Abort,
            link_lost_frame: None,
            late: BTreeMap::new(),
            operator: Vec::new(),
            persons: Vec::new(),
        }
    }
}

struct Line<'a> {
    no: usize,
    args: Vec<&'a str>,
}

impl Line<'_> {
    fn err(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError {
            line: self.no,
            message: message.into(),
        }
    }

    fn arity(&self, min: usize, max: usize) -> Result<(), ScenarioError> {
        let n = self.args.len();
        if n < min || n > max {
            let want = if min == max {
                format!("{min}")
            } else {
                format!("{min} to {max}")
            };
            return Err(self.err(format!("expected {want} argument(s), found {n}")));
        }
        Ok(())
    }

    fn num<T: std::str::FromStr>(&self, i: usize, what: &str) -> Result<T, ScenarioError> {
        self.args[i]
            .parse()
            .map_err(|_| self.err(format!("invalid {what} {:?}", self.args[i])))
    }

    fn real(&self, i: usize, what: &str) -> Result<f64, ScenarioError> {
        let v: f64 = self.num(i, what)?;
        if !v.is_finite() {
            return Err(self.err(format!("{what} must be finite")));
        }
        Ok(v)
    }

    fn positive(&self, i: usize, what: &str) -> Result<f64, ScenarioError> {
        let v = self.real(i, what)?;
        if v <= 0.0 {
            return Err(self.err(format!("{what} must be > 0, got {v}")));
        }
        Ok(v)
    }
}

fn person(l: &Line) -> Result<PersonTrack, ScenarioError> {
    let (mut pos, mut opts) = (Vec::new(), Vec::new());
    for a in &l.args {
        if a.contains('=') {
            opts.push(*a);
        } else if opts.is_empty() {
            pos.push(*a);
        } else {
            return Err(l.err("positional argument after key=value option"));
        }
    }
    if pos.len() != 5 && pos.len() != 7 {
        return Err(l.err("person needs: id from to x0 y0 [x1 y1] [size=m] [intensity=v]"));
    }
    let from_frame: u32 = l.num(1, "from frame")?;
    let to_frame: u32 = l.num(2, "to frame")?;
    if to_frame < from_frame {
        return Err(l.err(format!("person frames {from_frame}..{to_frame} are reversed")));
    }
    let start = WorldCoord::new(l.real(3, "x0")?, l.real(4, "y0")?);
    let end = if pos.len() == 7 {
        WorldCoord::new(l.real(5, "x1")?, l.real(6, "y1")?)
    } else {
        start
    };
    let mut track = PersonTrack {
        id: pos[0].to_string(),
        from_frame,
        to_frame,
        start,
        end,
        size_m: 0.6,
        intensity: 220,
    };
    for o in opts {
        let (k, v) = o.split_once('=').expect("contains '='");
        match k {
            "size" => match v.parse::<f64>() {
                Ok(s) if s.is_finite() && s > 0.0 => track.size_m = s,
                _ => return Err(l.err(format!("invalid size {v:?}"))),
            },
            "intensity" => {
                track.intensity = v.parse().map_err(|_| l.err(format!("invalid intensity {v:?}")))?;
            }
            _ => return Err(l.err(format!("unknown person option {k:?}"))),
        }
    }
    Ok(track)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut seen = HashSet::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut words = content.split_whitespace();
        let Some(key) = words.next() else { continue };
        let l = Line {
            no: i + 1,
            args: words.collect(),
        };
        let repeatable = matches!(key, "person" | "operator" | "late");
        if !repeatable && !seen.insert(key.to_string()) {
            return Err(l.err(format!("duplicate directive {key:?}")));
        }
        match key {
            "mode" => {
                l.arity(1, 1)?;
                sc.mode = l.args[0].parse().map_err(|e: String| l.err(e))?;
            }
            "seed" => {
                l.arity(1, 1)?;
                sc.seed = l.num(0, "seed")?;
            }
            "frames" => {
                l.arity(1, 1)?;
                sc.frames = l.num(0, "frame count")?;
                if sc.frames == 0 {
                    return Err(l.err("frame count must be >= 1"));
                }
            }
            "frame_rate" => {
                l.arity(1, 1)?;
                sc.frame_rate_hz = l.positive(0, "frame rate")?;
            }
            "start_ms" => {
                l.arity(1, 1)?;
                sc.start_ms = l.num(0, "start time")?;
            }
            "drop" => {
                l.arity(2, 2)?;
                sc.drop_point = WorldCoord::new(l.real(0, "x")?, l.real(1, "y")?);
            }
            "geo" => {
                l.arity(2, 2)?;
                let (lat, lon) = (l.real(0, "latitude")?, l.real(1, "longitude")?);
                if lat.abs() > 89.0 || lon.abs() > 180.0 {
                    return Err(l.err(format!("geo reference ({lat}, {lon}) out of range")));
                }
                sc.geo_ref = (lat, lon);
            }
            "zone" => {
                l.arity(3, 3)?;
                sc.safety_radius_m = l.positive(0, "safety radius")?;
                sc.min_confidence = l.real(1, "min confidence")?;
                if !(0.0..=1.0).contains(&sc.min_confidence) {
                    return Err(l.err("min confidence must lie in [0, 1]"));
                }
                sc.required_clear_frames = l.num(2, "clear frame count")?;
                if sc.required_clear_frames == 0 {
                    return Err(l.err("clear frame count must be >= 1"));
                }
            }
            "safety" => {
                l.arity(1, 1)?;
                sc.safety_test = match l.args[0] {
                    "center" => SafetyTest::Center,
                    "footprint" => SafetyTest::Footprint,
                    s => return Err(l.err(format!("unknown safety test {s:?}"))),
                };
            }
            "budget" => {
                l.arity(1, 1)?;
                sc.budget_s = l.positive(0, "budget")?;
            }
            "processing" => {
                l.arity(2, 2)?;
                sc.seconds_per_mp = l.real(0, "seconds per megapixel")?;
                sc.jitter_s = l.real(1, "jitter")?;
                if sc.seconds_per_mp < 0.0 || sc.jitter_s < 0.0 {
                    return Err(l.err("processing times must be >= 0"));
                }
            }
            "camera" => {
                l.arity(3, 3)?;
                sc.camera_width = l.num(0, "camera width")?;
                sc.camera_height = l.num(1, "camera height")?;
                sc.camera_gsd_m = l.positive(2, "camera GSD")?;
                if sc.camera_width == 0 || sc.camera_height == 0 {
                    return Err(l.err("camera size must be non-zero"));
                }
            }
            "noise" => {
                l.arity(1, 1)?;
                sc.noise = l.num(0, "noise amplitude")?;
            }
            "arrive" => {
                l.arity(1, 1)?;
                sc.arrive_frame = l.num(0, "arrival frame")?;
            }
            "timeout" => {
                l.arity(1, 1)?;
                sc.assess_timeout_s = l.positive(0, "timeout")?;
            }
            "operator_timeout" => {
                l.arity(1, 1)?;
                sc.operator_timeout_s = match l.args[0] {
                    "none" => None,
                    _ => Some(l.positive(0, "operator timeout")?),
                };
            }
            "link_policy" => {
                l.arity(1, 1)?;
                sc.link_policy = match l.args[0] {
                    "abort" => LinkLossPolicy::Abort,
                    "autonomous" => LinkLossPolicy::Autonomous,
                    s => return Err(l.err(format!("unknown link policy {s:?}"))),
                };
            }
            "link_lost" => {
                l.arity(1, 1)?;
                sc.link_lost_frame = Some(l.num(0, "frame")?);
            }
            "late" => {
                l.arity(1, 2)?;
                let frame = l.num(0, "frame")?;
                let secs = if l.args.len() == 2 {
                    l.positive(1, "processing time")?
                } else {
                    f64::NAN
                };
                sc.late.insert(frame, secs);
            }
            "operator" => {
                l.arity(2, 2)?;
                let frame = l.num(0, "frame")?;
                let cmd = match l.args[1] {
                    "release" => Command::Release,
                    "abort" => Command::Abort,
                    s => return Err(l.err(format!("unknown operator command {s:?}"))),
                };
                sc.operator.push((frame, cmd));
            }
            "person" => {
                let p = person(&l)?;
                if !ids.insert(p.id.clone()) {
                    return Err(l.err(format!("duplicate person id {:?}", p.id)));
                }
                sc.persons.push(p);
            }
            _ => return Err(l.err(format!("unknown directive {key:?}"))),
        }
    }
    // `late N` without a time means 1.5 × the final budget
    for v in sc.late.values_mut() {
        if v.is_nan() {
            *v = 1.5 * sc.budget_s;
        }
    }
    Ok(sc)
}
