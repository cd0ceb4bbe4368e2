//! Framed little-endian telemetry.
//!
//! ```text
//! D4 47 | 01 | type | len u32 | payload (len bytes) | crc32 u32
//! ```
//!
//! The CRC is IEEE 802.3 (reflected, as in zlib) over `type`, `len` and the
//! payload. Payloads:
//!
//! | type | message        | payload                                           |
//! |------|----------------|---------------------------------------------------|
//! | 1    | DetectionReport| frame_id u32, unix_time_ms u64, count u16, count × 13-byte records |
//! | 2    | DropCommand    | frame_id u32, command u8 (0 abort, 1 release)     |
//! | 3    | Ack            | frame_id u32                                      |
//! | 4    | Heartbeat      | unix_time_ms u64                                  |
//! | 5    | MissionStatus  | frame_id u32, state u8, clear_frames u8           |
//!
//! A detection record is lat_e7 i32, lon_e7 i32, width_cm u16, height_cm u16,
//! confidence u8.

mod codec;
mod json;
mod stream;

pub use codec::{decode, decode_frame, encode, encoded_len};
pub use json::{BridgeCommand, BridgeDetection, BridgeMessage};
pub use stream::{FrameBuffer, FrameReader, FrameWriter};

use thiserror::Error;

use crate::mission::MissionState;

pub const MAGIC: [u8; 2] = [0xD4, 0x47];
pub const VERSION: u8 = 1;
/// Magic, version, type, length and CRC.
pub const FRAME_OVERHEAD: usize = 12;
pub const HEADER_LEN: usize = 8;
pub const RECORD_LEN: usize = 13;
/// frame_id, unix_time_ms and count.
pub const REPORT_FIXED_LEN: usize = 14;
pub const MAX_DETECTIONS: usize = u16::MAX as usize;
pub const MAX_PAYLOAD: usize = REPORT_FIXED_LEN + MAX_DETECTIONS * RECORD_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    DetectionReport = 1,
    DropCommand = 2,
    Ack = 3,
    Heartbeat = 4,
    MissionStatus = 5,
}

impl MessageType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::DetectionReport,
            2 => Self::DropCommand,
            3 => Self::Ack,
            4 => Self::Heartbeat,
            5 => Self::MissionStatus,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Abort = 0,
    Release = 1,
}

/// One geolocated detection in fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WireDetection {
    pub lat_e7: i32,
    pub lon_e7: i32,
    pub width_cm: u16,
    pub height_cm: u16,
    pub confidence_u8: u8,
}

fn to_fixed<T: TryFrom<i64>>(v: f64, scale: f64, lo: i64, hi: i64) -> T {
    let x = if v.is_nan() { 0 } else { (v * scale).round().clamp(lo as f64, hi as f64) as i64 };
    T::try_from(x).ok().expect("value clamped to the target range")
}

impl WireDetection {
    /// Quantizes degrees, meters and a [0, 1] confidence. Values outside the
    /// representable range saturate.
    pub fn from_values(lat_deg: f64, lon_deg: f64, width_m: f64, height_m: f64, confidence: f64) -> Self {
        Self {
            lat_e7: to_fixed(lat_deg, 1e7, i32::MIN as i64, i32::MAX as i64),
            lon_e7: to_fixed(lon_deg, 1e7, i32::MIN as i64, i32::MAX as i64),
            width_cm: to_fixed(width_m, 100.0, 0, u16::MAX as i64),
            height_cm: to_fixed(height_m, 100.0, 0, u16::MAX as i64),
            confidence_u8: to_fixed(confidence, 255.0, 0, 255),
        }
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_e7 as f64 / 1e7
    }
    pub fn lon_deg(&self) -> f64 {
        self.lon_e7 as f64 / 1e7
    }
    pub fn width_m(&self) -> f64 {
        self.width_cm as f64 / 100.0
    }
    pub fn height_m(&self) -> f64 {
        self.height_cm as f64 / 100.0
    }
    pub fn confidence(&self) -> f64 {
        self.confidence_u8 as f64 / 255.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TelemetryMessage {
    DetectionReport {
        frame_id: u32,
        unix_time_ms: u64,
        detections: Vec<WireDetection>,
    },
    DropCommand {
        frame_id: u32,
        command: Command,
    },
    Ack {
        frame_id: u32,
    },
    Heartbeat {
        unix_time_ms: u64,
    },
    MissionStatus {
        frame_id: u32,
        state: MissionState,
        clear_frames: u8,
    },
}

impl TelemetryMessage {
    pub fn message_type(&self) -> MessageType {
        match self {
            Self::DetectionReport { .. } => MessageType::DetectionReport,
            Self::DropCommand { .. } => MessageType::DropCommand,
            Self::Ack { .. } => MessageType::Ack,
            Self::Heartbeat { .. } => MessageType::Heartbeat,
            Self::MissionStatus { .. } => MessageType::MissionStatus,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("{0} detections exceed the 65535 per-report limit")]
    TooManyDetections(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic {0:02X} {1:02X}")]
    BadMagic(u8, u8),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("declared payload length {0} exceeds the maximum")]
    PayloadTooLong(u32),
    #[error("CRC mismatch: frame says {expected:08X}, computed {computed:08X}")]
    BadCrc { expected: u32, computed: u32 },
    #[error("{message_type:?} payload must be {expected} bytes, found {found}")]
    PayloadLength {
        message_type: MessageType,
        expected: usize,
        found: usize,
    },
    #[error("invalid {field} value {value}")]
    InvalidField { field: &'static str, value: u64 },
    #[error("{0} trailing bytes after the frame")]
    TrailingBytes(usize),
}

/// Raw image bytes over report bytes.
pub fn bandwidth_ratio(image_bytes: u64, report_bytes: u64) -> Option<f64> {
    (image_bytes > 0 && report_bytes > 0).then(|| image_bytes as f64 / report_bytes as f64)
}
