//! Deterministic scenario replay on a simulated clock.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    assess_drop_zone, DropZone, Event, LocalFrame, MissionMachine, MissionState, Mode, SafetyVerdict, Scenario,
    Transition, ZoneError,
};
use crate::detection::{geolocate, GeoDetection};
use crate::geocore::{GeoTransform, Gsd, WorldCoord};
use crate::models::{run_detection, BlobDetector, DetectionModel, ModelError};
use crate::raster::{GeoRaster, Grid};
use crate::telemetry::{encode, Command, FrameBuffer, MessageType, TelemetryMessage, WireDetection};
use crate::tiler::TileConfig;

const BACKGROUND: u8 = 40;
const DETECT_THRESHOLD: u8 = 128;
const NMS_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("camera GSD {0} m is outside the detector's valid range")]
    CameraGsd(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Released { frame: u32 },
    Aborted { frame: u32 },
    /// Frames ran out before a terminal state.
    Incomplete(MissionState),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Released { frame } => write!(f, "Released\tframe={frame}"),
            Self::Aborted { frame } => write!(f, "Aborted\tframe={frame}"),
            Self::Incomplete(s) => write!(f, "Incomplete\tstate={s}"),
        }
    }
}

/// One log line. `frame` is the simulated frame index.
#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Start {
        mode: Mode,
        seed: u64,
        frames: u32,
        required_clear_frames: u32,
        radius_m: f64,
        min_confidence: f64,
        budget_s: f64,
    },
    Transition { frame: u32, transition: Transition },
    Rejected { frame: u32, event: Event, reason: String },
    Detections { frame: u32, processing_s: f64, detections: Vec<GeoDetection> },
    Late { frame: u32, processing_s: f64, deadline_s: f64 },
    Verdict { frame: u32, safe: bool, offenders: usize, nearest_m: Option<f64> },
    Tx { frame: u32, kind: MessageType, bytes: usize },
    TxDropped { frame: u32, kind: MessageType, bytes: usize },
    Rx { frame: u32, kind: MessageType, bytes: usize },
    RxDropped { frame: u32, bytes: usize },
    RxError { frame: u32, error: String },
    LinkLost { frame: u32 },
    Outcome { outcome: Outcome, tx_bytes: u64, rx_bytes: u64 },
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Start {
                mode,
                seed,
                frames,
                required_clear_frames,
                radius_m,
                min_confidence,
                budget_s,
            } => write!(
                f,
                "-\tstart\tmode={mode}\tseed={seed}\tframes={frames}\tk={required_clear_frames}\t\
                 radius_m={radius_m:.3}\tmin_conf={min_confidence:.3}\tbudget_s={budget_s:.3}"
            ),
            Self::Transition { frame, transition: t } => write!(
                f,
                "{frame}\ttransition\t{}\t{}\t{}\tclear={}",
                t.event, t.from, t.to, t.consecutive_safe
            ),
            Self::Rejected { frame, event, reason } => write!(f, "{frame}\trejected\t{event}\t{reason}"),
            Self::Detections {
                frame,
                processing_s,
                detections,
            } => {
                write!(f, "{frame}\tdetections\tn={}\tproc_s={processing_s:.3}", detections.len())?;
                for d in detections {
                    write!(f, "\t{:.3},{:.3},{:.4}", d.center.x, d.center.y, d.confidence)?;
                }
                Ok(())
            }
            Self::Late {
                frame,
                processing_s,
                deadline_s,
            } => write!(f, "{frame}\tlate\tproc_s={processing_s:.3}\tdeadline_s={deadline_s:.3}\tdropped"),
            Self::Verdict {
                frame,
                safe,
                offenders,
                nearest_m,
            } => {
                let v = if *safe { "safe" } else { "unsafe" };
                write!(f, "{frame}\tverdict\t{v}\toffenders={offenders}")?;
                match nearest_m {
                    Some(d) => write!(f, "\tnearest_m={d:.3}"),
                    None => f.write_str("\tnearest_m=NA"),
                }
            }
            Self::Tx { frame, kind, bytes } => write!(f, "{frame}\ttx\t{kind:?}\t{bytes}"),
            Self::TxDropped { frame, kind, bytes } => write!(f, "{frame}\ttx-dropped\t{kind:?}\t{bytes}"),
            Self::Rx { frame, kind, bytes } => write!(f, "{frame}\trx\t{kind:?}\t{bytes}"),
            Self::RxDropped { frame, bytes } => write!(f, "{frame}\trx-dropped\t{bytes}"),
            Self::RxError { frame, error } => write!(f, "{frame}\trx-error\t{error}"),
            Self::LinkLost { frame } => write!(f, "{frame}\tlink-lost"),
            Self::Outcome {
                outcome,
                tx_bytes,
                rx_bytes,
            } => write!(f, "-\toutcome\t{outcome}\ttx_bytes={tx_bytes}\trx_bytes={rx_bytes}"),
        }
    }
}

/// Append-only mission log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissionLog {
    records: Vec<LogRecord>,
}

impl MissionLog {
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::Outcome { outcome, .. } => Some(*outcome),
            _ => None,
        })
    }

    pub fn transitions(&self) -> impl Iterator<Item = (u32, &Transition)> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Transition { frame, transition } => Some((*frame, transition)),
            _ => None,
        })
    }

    /// One record per line, tab-separated, newline-terminated.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# dropsight mission log v1\n");
        for r in &self.records {
            writeln!(s, "{r}").expect("writing to a String");
        }
        s
    }
}

/// Frame-by-frame mission simulator. One call to [`Simulator::advance`]
/// processes one camera frame.
pub struct Simulator {
    sc: Scenario,
    zone: DropZone,
    machine: MissionMachine,
    detector: BlobDetector,
    local: LocalFrame,
    rng: ChaCha8Rng,
    frame: u32,
    link_up: bool,
    uplink: FrameBuffer,
    scripted: BTreeMap<u32, Vec<Command>>,
    assess_since: Option<u32>,
    awaiting_since: Option<u32>,
    tx_bytes: u64,
    rx_bytes: u64,
    log: MissionLog,
    finished: bool,
}

impl Simulator {
    pub fn new(sc: Scenario) -> Result<Self, SimError> {
        let zone = DropZone::new(sc.drop_point, sc.safety_radius_m, sc.min_confidence, sc.required_clear_frames)?
            .with_test(sc.safety_test);
        let person_px = (0.2 / sc.camera_gsd_m).powi(2).ceil().max(1.0) as usize;
        let detector = BlobDetector::new(DETECT_THRESHOLD, person_px, usize::MAX)?;
        let gsd = Gsd::new(sc.camera_gsd_m).map_err(|_| SimError::CameraGsd(sc.camera_gsd_m))?;
        if !detector.valid_gsd_range().contains(gsd) {
            return Err(SimError::CameraGsd(sc.camera_gsd_m));
        }
        let mut scripted: BTreeMap<u32, Vec<Command>> = BTreeMap::new();
        for &(f, c) in &sc.operator {
            scripted.entry(f).or_default().push(c);
        }
        let mut log = MissionLog::default();
        log.push(LogRecord::Start {
            mode: sc.mode,
            seed: sc.seed,
            frames: sc.frames,
            required_clear_frames: sc.required_clear_frames,
            radius_m: sc.safety_radius_m,
            min_confidence: sc.min_confidence,
            budget_s: sc.budget_s,
        });
        Ok(Self {
            machine: MissionMachine::new(sc.mode, sc.required_clear_frames, sc.link_policy),
            local: LocalFrame::new(sc.geo_ref.0, sc.geo_ref.1),
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            zone,
            detector,
            frame: 0,
            link_up: true,
            uplink: FrameBuffer::new(),
            scripted,
            assess_since: None,
            awaiting_since: None,
            tx_bytes: 0,
            rx_bytes: 0,
            log,
            finished: false,
            sc,
        })
    }

    pub fn state(&self) -> MissionState {
        self.machine.state()
    }
    pub fn frame(&self) -> u32 {
        self.frame
    }
    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }
    pub fn zone(&self) -> &DropZone {
        &self.zone
    }
    pub fn local_frame(&self) -> &LocalFrame {
        &self.local
    }
    pub fn log(&self) -> &MissionLog {
        &self.log
    }
    pub fn link_up(&self) -> bool {
        self.link_up
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn time_s(&self, frame: u32) -> f64 {
        frame as f64 / self.sc.frame_rate_hz
    }

    fn step(&mut self, event: Event) {
        let frame = self.frame;
        match self.machine.step(event) {
            Ok(t) => {
                if t.to == MissionState::AwaitingOperator && t.from != MissionState::AwaitingOperator {
                    self.awaiting_since = Some(frame);
                }
                self.log.push(LogRecord::Transition { frame, transition: t });
            }
            Err(e) => self.log.push(LogRecord::Rejected {
                frame,
                event,
                reason: e.to_string(),
            }),
        }
    }

    fn send(&mut self, msg: &TelemetryMessage, out: &mut Vec<u8>) {
        let bytes = encode(msg).expect("simulated reports stay under the detection limit");
        let (frame, kind, n) = (self.frame, msg.message_type(), bytes.len());
        if self.link_up {
            out.extend_from_slice(&bytes);
            self.tx_bytes += n as u64;
            self.log.push(LogRecord::Tx { frame, kind, bytes: n });
        } else {
            self.log.push(LogRecord::TxDropped { frame, kind, bytes: n });
        }
    }

    fn receive(&mut self, uplink: &[u8], out: &mut Vec<u8>) {
        let frame = self.frame;
        let mut bytes = uplink.to_vec();
        for cmd in self.scripted.remove(&frame).unwrap_or_default() {
            let msg = TelemetryMessage::DropCommand { frame_id: frame, command: cmd };
            bytes.extend(encode(&msg).expect("small message"));
        }
        if bytes.is_empty() {
            return;
        }
        if !self.link_up {
            self.log.push(LogRecord::RxDropped {
                frame,
                bytes: bytes.len(),
            });
            return;
        }
        self.rx_bytes += bytes.len() as u64;
        self.uplink.push(&bytes);
        while let Some(r) = self.uplink.next_frame() {
            match r {
                Ok((msg, n)) => {
                    self.log.push(LogRecord::Rx {
                        frame,
                        kind: msg.message_type(),
                        bytes: n,
                    });
                    if let TelemetryMessage::DropCommand { frame_id, command } = msg {
                        self.send(&TelemetryMessage::Ack { frame_id }, out);
                        if !self.machine.state().is_terminal() {
                            self.step(Event::OperatorCommand(command));
                        }
                    }
                }
                Err(e) => self.log.push(LogRecord::RxError {
                    frame,
                    error: e.to_string(),
                }),
            }
        }
    }

    fn camera_transform(&self) -> GeoTransform {
        let g = self.sc.camera_gsd_m;
        let half_w = (self.sc.camera_width as f64 - 1.0) / 2.0;
        let half_h = (self.sc.camera_height as f64 - 1.0) / 2.0;
        let origin = WorldCoord::new(
            self.sc.drop_point.x - half_w * g,
            self.sc.drop_point.y + half_h * g,
        );
        GeoTransform::north_up(origin, Gsd::new(g).expect("checked in new"))
    }

    /// Synthetic nadir frame centered on the drop point: people are bright
    /// squares on a dark background plus seeded uniform noise.
    fn render(&mut self, transform: &GeoTransform) -> Grid<u8> {
        let (w, h) = (self.sc.camera_width, self.sc.camera_height);
        let mut data = vec![BACKGROUND; w * h];
        for p in &self.sc.persons {
            let Some(pos) = p.position(self.frame) else { continue };
            let half = p.size_m / 2.0;
            let a = transform.world_to_pixel(WorldCoord::new(pos.x - half, pos.y + half));
            let b = transform.world_to_pixel(WorldCoord::new(pos.x + half, pos.y - half));
            let r0 = a.row.ceil().max(0.0) as usize;
            let c0 = a.col.ceil().max(0.0) as usize;
            let r1 = (b.row.floor().min(h as f64 - 1.0)).max(-1.0);
            let c1 = (b.col.floor().min(w as f64 - 1.0)).max(-1.0);
            if r1 < 0.0 || c1 < 0.0 {
                continue;
            }
            for r in r0..=r1 as usize {
                for c in c0..=c1 as usize {
                    data[r * w + c] = data[r * w + c].max(p.intensity);
                }
            }
        }
        if self.sc.noise > 0 {
            let n = self.sc.noise as i16;
            for v in &mut data {
                let d: i16 = self.rng.random_range(-n..=n);
                *v = (*v as i16 + d).clamp(0, 255) as u8;
            }
        }
        Grid::new(w, h, 1, data).expect("camera size checked")
    }

    fn processing_time(&mut self) -> f64 {
        if let Some(&t) = self.sc.late.get(&self.frame) {
            return t;
        }
        let mp = (self.sc.camera_width * self.sc.camera_height) as f64 / 1e6;
        let jitter = if self.sc.jitter_s > 0.0 {
            self.rng.random_range(0.0..self.sc.jitter_s)
        } else {
            0.0
        };
        self.sc.seconds_per_mp * mp + jitter
    }

    fn assess(&mut self, out: &mut Vec<u8>) -> Result<(), SimError> {
        let frame = self.frame;
        let processing_s = self.processing_time();
        if processing_s > self.sc.budget_s {
            self.log.push(LogRecord::Late {
                frame,
                processing_s,
                deadline_s: self.sc.budget_s,
            });
            return Ok(());
        }
        let transform = self.camera_transform();
        let grid = self.render(&transform);
        let raster = GeoRaster::new(grid, transform).expect("grid and transform agree");
        let dets = run_detection(&self.detector, &raster, TileConfig::default(), NMS_IOU)?;
        let geo = geolocate(&dets, &transform);
        self.log.push(LogRecord::Detections {
            frame,
            processing_s,
            detections: geo.clone(),
        });
        let verdict = assess_drop_zone(&geo, &self.zone);
        let (offenders, nearest_m) = match &verdict {
            SafetyVerdict::Safe => (0, None),
            SafetyVerdict::Unsafe(o) => (o.len(), Some(o[0].distance_m)),
        };
        self.log.push(LogRecord::Verdict {
            frame,
            safe: verdict.is_safe(),
            offenders,
            nearest_m,
        });
        let drop = self.sc.drop_point;
        let detections = geo
            .iter()
            .map(|d| {
                let (lat, lon) = self
                    .local
                    .to_geo(WorldCoord::new(d.center.x - drop.x, d.center.y - drop.y));
                WireDetection::from_values(lat, lon, d.width_m, d.height_m, d.confidence)
            })
            .collect();
        let unix_time_ms = self.sc.start_ms + (self.time_s(frame) * 1000.0).round() as u64;
        self.send(
            &TelemetryMessage::DetectionReport {
                frame_id: frame,
                unix_time_ms,
                detections,
            },
            out,
        );
        self.step(Event::VerdictReady {
            safe: verdict.is_safe(),
        });
        Ok(())
    }

    /// Processes the next frame. `uplink` is whatever arrived from the
    /// station since the previous call; the return value is the downlink for
    /// this frame. After the last frame the outcome is logged and further
    /// calls return nothing.
    pub fn advance(&mut self, uplink: &[u8]) -> Result<Vec<u8>, SimError> {
        let mut out = Vec::new();
        if self.finished {
            return Ok(out);
        }
        let frame = self.frame;
        let t = self.time_s(frame);
        if self.machine.state() == MissionState::ReleaseCleared {
            self.step(Event::ActuationTick);
        } else {
            self.receive(uplink, &mut out);
            if self.sc.link_lost_frame == Some(frame) && self.link_up {
                self.link_up = false;
                self.log.push(LogRecord::LinkLost { frame });
                if self.sc.mode == Mode::Piloted && !self.machine.state().is_terminal() {
                    self.step(Event::LinkLost);
                }
            }
            if frame == self.sc.arrive_frame && self.machine.state() == MissionState::Enroute {
                self.step(Event::ArrivedAtDropPoint);
                self.assess_since = Some(frame);
            }
            if matches!(
                self.machine.state(),
                MissionState::Assessing | MissionState::AwaitingOperator | MissionState::ReleaseCleared
            ) {
                self.assess(&mut out)?;
            }
            let elapsed = |since: Option<u32>| since.map(|s| t - self.time_s(s));
            match self.machine.state() {
                MissionState::Assessing
                    if elapsed(self.assess_since).is_some_and(|e| e >= self.sc.assess_timeout_s) =>
                {
                    self.step(Event::Timeout)
                }
                MissionState::AwaitingOperator
                    if self
                        .sc
                        .operator_timeout_s
                        .zip(elapsed(self.awaiting_since))
                        .is_some_and(|(limit, e)| e >= limit) =>
                {
                    self.step(Event::Timeout)
                }
                _ => {}
            }
        }
        let status = if self.machine.state() == MissionState::Enroute {
            TelemetryMessage::Heartbeat {
                unix_time_ms: self.sc.start_ms + (t * 1000.0).round() as u64,
            }
        } else {
            TelemetryMessage::MissionStatus {
                frame_id: frame,
                state: self.machine.state(),
                clear_frames: self.machine.consecutive_safe().min(255) as u8,
            }
        };
        self.send(&status, &mut out);
        self.frame += 1;
        if self.frame >= self.sc.frames || self.machine.state().is_terminal() {
            self.finish();
        }
        Ok(out)
    }

    fn finish(&mut self) {
        let last = self.frame.saturating_sub(1);
        let outcome = match self.machine.state() {
            MissionState::Released => Outcome::Released { frame: last },
            MissionState::Aborted => Outcome::Aborted { frame: last },
            s => Outcome::Incomplete(s),
        };
        self.log.push(LogRecord::Outcome {
            outcome,
            tx_bytes: self.tx_bytes,
            rx_bytes: self.rx_bytes,
        });
        self.finished = true;
    }

    pub fn into_log(self) -> MissionLog {
        self.log
    }
}

/// Runs a scenario to completion with only its scripted operator input.
pub fn run_simulation(sc: &Scenario) -> Result<MissionLog, SimError> {
    let mut sim = Simulator::new(sc.clone())?;
    while !sim.is_finished() {
        sim.advance(&[])?;
    }
    Ok(sim.into_log())
}
