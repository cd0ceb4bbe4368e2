//! JSON mirror of the wire messages for the browser bridge.
//!
//! One object per message, tagged by `type`, fields in camelCase. Telemetry
//! variants carry the same fixed-point integers as the binary frame; the bridge
//! adds `wireBytes` (size of the frame it re-encoded) and two bridge-only
//! variants, `zone` and `link`.

use serde::{Deserialize, Serialize};

use super::{encoded_len, Command, TelemetryMessage, WireDetection};
use crate::mission::MissionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BridgeDetection {
    pub lat_e7: i32,
    pub lon_e7: i32,
    pub width_cm: u16,
    pub height_cm: u16,
    pub confidence_u8: u8,
}

impl From<WireDetection> for BridgeDetection {
    fn from(d: WireDetection) -> Self {
        Self {
            lat_e7: d.lat_e7,
            lon_e7: d.lon_e7,
            width_cm: d.width_cm,
            height_cm: d.height_cm,
            confidence_u8: d.confidence_u8,
        }
    }
}

impl From<BridgeDetection> for WireDetection {
    fn from(d: BridgeDetection) -> Self {
        Self {
            lat_e7: d.lat_e7,
            lon_e7: d.lon_e7,
            width_cm: d.width_cm,
            height_cm: d.height_cm,
            confidence_u8: d.confidence_u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BridgeCommand {
    Abort,
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum BridgeMessage {
    DetectionReport {
        frame_id: u32,
        unix_time_ms: u64,
        detections: Vec<BridgeDetection>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire_bytes: Option<usize>,
    },
    DropCommand {
        frame_id: u32,
        command: BridgeCommand,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire_bytes: Option<usize>,
    },
    Ack {
        frame_id: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire_bytes: Option<usize>,
    },
    Heartbeat {
        unix_time_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire_bytes: Option<usize>,
    },
    MissionStatus {
        frame_id: u32,
        state: MissionState,
        clear_frames: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire_bytes: Option<usize>,
    },
    /// Drop point and safety parameters for the overlay. Sent once per client.
    Zone {
        lat_e7: i32,
        lon_e7: i32,
        radius_m: f64,
        min_confidence: f64,
        required_clear_frames: u32,
    },
    Link {
        up: bool,
    },
}

impl BridgeMessage {
    /// Mirror of a decoded frame; `wireBytes` is the frame's encoded size.
    pub fn from_telemetry(msg: &TelemetryMessage) -> Self {
        let wire_bytes = Some(encoded_len(msg));
        match msg {
            TelemetryMessage::DetectionReport {
                frame_id,
                unix_time_ms,
                detections,
            } => Self::DetectionReport {
                frame_id: *frame_id,
                unix_time_ms: *unix_time_ms,
                detections: detections.iter().map(|&d| d.into()).collect(),
                wire_bytes,
            },
            TelemetryMessage::DropCommand { frame_id, command } => Self::DropCommand {
                frame_id: *frame_id,
                command: match command {
                    Command::Abort => BridgeCommand::Abort,
                    Command::Release => BridgeCommand::Release,
                },
                wire_bytes,
            },
            TelemetryMessage::Ack { frame_id } => Self::Ack {
                frame_id: *frame_id,
                wire_bytes,
            },
            TelemetryMessage::Heartbeat { unix_time_ms } => Self::Heartbeat {
                unix_time_ms: *unix_time_ms,
                wire_bytes,
            },
            TelemetryMessage::MissionStatus {
                frame_id,
                state,
                clear_frames,
            } => Self::MissionStatus {
                frame_id: *frame_id,
                state: *state,
                clear_frames: *clear_frames,
                wire_bytes,
            },
        }
    }

    /// The wire message this mirrors, or `None` for bridge-only variants.
    pub fn to_telemetry(&self) -> Option<TelemetryMessage> {
        Some(match self {
            Self::DetectionReport {
                frame_id,
                unix_time_ms,
                detections,
                ..
            } => TelemetryMessage::DetectionReport {
                frame_id: *frame_id,
                unix_time_ms: *unix_time_ms,
                detections: detections.iter().map(|&d| d.into()).collect(),
            },
            Self::DropCommand { frame_id, command, .. } => TelemetryMessage::DropCommand {
                frame_id: *frame_id,
                command: match command {
                    BridgeCommand::Abort => Command::Abort,
                    BridgeCommand::Release => Command::Release,
                },
            },
            Self::Ack { frame_id, .. } => TelemetryMessage::Ack { frame_id: *frame_id },
            Self::Heartbeat { unix_time_ms, .. } => TelemetryMessage::Heartbeat {
                unix_time_ms: *unix_time_ms,
            },
            Self::MissionStatus {
                frame_id,
                state,
                clear_frames,
                ..
            } => TelemetryMessage::MissionStatus {
                frame_id: *frame_id,
                state: *state,
                clear_frames: *clear_frames,
            },
            Self::Zone { .. } | Self::Link { .. } => return None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bridge messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
