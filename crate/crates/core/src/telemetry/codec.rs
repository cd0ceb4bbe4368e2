use super::{
    Command, DecodeError, EncodeError, MessageType, TelemetryMessage, WireDetection, FRAME_OVERHEAD, HEADER_LEN,
    MAGIC, MAX_DETECTIONS, MAX_PAYLOAD, RECORD_LEN, REPORT_FIXED_LEN, VERSION,
};
use crate::mission::MissionState;

fn payload_len(msg: &TelemetryMessage) -> usize {
    match msg {
        TelemetryMessage::DetectionReport { detections, .. } => REPORT_FIXED_LEN + RECORD_LEN * detections.len(),
        TelemetryMessage::DropCommand { .. } => 5,
        TelemetryMessage::Ack { .. } => 4,
        TelemetryMessage::Heartbeat { .. } => 8,
        TelemetryMessage::MissionStatus { .. } => 6,
    }
}

/// Total frame size in bytes.
pub fn encoded_len(msg: &TelemetryMessage) -> usize {
    FRAME_OVERHEAD + payload_len(msg)
}

pub fn encode(msg: &TelemetryMessage) -> Result<Vec<u8>, EncodeError> {
    if let TelemetryMessage::DetectionReport { detections, .. } = msg {
        if detections.len() > MAX_DETECTIONS {
            return Err(EncodeError::TooManyDetections(detections.len()));
        }
    }
    let len = payload_len(msg);
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + len);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.message_type() as u8);
    out.extend_from_slice(&(len as u32).to_le_bytes());
    match msg {
        TelemetryMessage::DetectionReport {
            frame_id,
            unix_time_ms,
            detections,
        } => {
            out.extend_from_slice(&frame_id.to_le_bytes());
            out.extend_from_slice(&unix_time_ms.to_le_bytes());
            out.extend_from_slice(&(detections.len() as u16).to_le_bytes());
            for d in detections {
                out.extend_from_slice(&d.lat_e7.to_le_bytes());
                out.extend_from_slice(&d.lon_e7.to_le_bytes());
                out.extend_from_slice(&d.width_cm.to_le_bytes());
                out.extend_from_slice(&d.height_cm.to_le_bytes());
                out.push(d.confidence_u8);
            }
        }
        TelemetryMessage::DropCommand { frame_id, command } => {
            out.extend_from_slice(&frame_id.to_le_bytes());
            out.push(*command as u8);
        }
        TelemetryMessage::Ack { frame_id } => out.extend_from_slice(&frame_id.to_le_bytes()),
        TelemetryMessage::Heartbeat { unix_time_ms } => out.extend_from_slice(&unix_time_ms.to_le_bytes()),
        TelemetryMessage::MissionStatus {
            frame_id,
            state,
            clear_frames,
        } => {
            out.extend_from_slice(&frame_id.to_le_bytes());
            out.push(state.code());
            out.push(*clear_frames);
        }
    }
    let crc = crc32fast::hash(&out[3..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Little-endian cursor over a payload whose length was already checked.
struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let a: [u8; N] = self.b[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        a
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
}

fn expect_len(t: MessageType, expected: usize, found: usize) -> Result<(), DecodeError> {
    if expected == found {
        Ok(())
    } else {
        Err(DecodeError::PayloadLength {
            message_type: t,
            expected,
            found,
        })
    }
}

fn decode_payload(t: MessageType, p: &[u8]) -> Result<TelemetryMessage, DecodeError> {
    let mut c = Cursor { b: p, pos: 0 };
    Ok(match t {
        MessageType::DetectionReport => {
            if p.len() < REPORT_FIXED_LEN {
                return Err(DecodeError::PayloadLength {
                    message_type: t,
                    expected: REPORT_FIXED_LEN,
                    found: p.len(),
                });
            }
            let frame_id = c.u32();
            let unix_time_ms = c.u64();
            let count = c.u16() as usize;
            expect_len(t, REPORT_FIXED_LEN + RECORD_LEN * count, p.len())?;
            let detections = (0..count)
                .map(|_| WireDetection {
                    lat_e7: c.i32(),
                    lon_e7: c.i32(),
                    width_cm: c.u16(),
                    height_cm: c.u16(),
                    confidence_u8: c.u8(),
                })
                .collect();
            TelemetryMessage::DetectionReport {
                frame_id,
                unix_time_ms,
                detections,
            }
        }
        MessageType::DropCommand => {
            expect_len(t, 5, p.len())?;
            let frame_id = c.u32();
            let command = match c.u8() {
                0 => Command::Abort,
                1 => Command::Release,
                v => return Err(DecodeError::InvalidField { field: "command", value: v as u64 }),
            };
            TelemetryMessage::DropCommand { frame_id, command }
        }
        MessageType::Ack => {
            expect_len(t, 4, p.len())?;
            TelemetryMessage::Ack { frame_id: c.u32() }
        }
        MessageType::Heartbeat => {
            expect_len(t, 8, p.len())?;
            TelemetryMessage::Heartbeat { unix_time_ms: c.u64() }
        }
        MessageType::MissionStatus => {
            expect_len(t, 6, p.len())?;
            let frame_id = c.u32();
            let code = c.u8();
            let state = MissionState::from_code(code).ok_or(DecodeError::InvalidField {
                field: "mission state",
                value: code as u64,
            })?;
            TelemetryMessage::MissionStatus {
                frame_id,
                state,
                clear_frames: c.u8(),
            }
        }
    })
}

/// Decodes the frame at the start of `bytes`, returning the message and the
/// number of bytes it occupied.
pub fn decode_frame(bytes: &[u8]) -> Result<(TelemetryMessage, usize), DecodeError> {
    let truncated = |needed: usize| DecodeError::Truncated {
        needed,
        available: bytes.len(),
    };
    if bytes.len() < 2 {
        return Err(truncated(HEADER_LEN));
    }
    if bytes[..2] != MAGIC {
        return Err(DecodeError::BadMagic(bytes[0], bytes[1]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    if bytes[2] != VERSION {
        return Err(DecodeError::UnsupportedVersion(bytes[2]));
    }
    let t = MessageType::from_u8(bytes[3]).ok_or(DecodeError::UnknownType(bytes[3]))?;
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("8-byte header"));
    if len as usize > MAX_PAYLOAD {
        return Err(DecodeError::PayloadTooLong(len));
    }
    let total = FRAME_OVERHEAD + len as usize;
    if bytes.len() < total {
        return Err(truncated(total));
    }
    let body_end = HEADER_LEN + len as usize;
    let expected = u32::from_le_bytes(bytes[body_end..total].try_into().expect("4-byte crc"));
    let computed = crc32fast::hash(&bytes[3..body_end]);
    if expected != computed {
        return Err(DecodeError::BadCrc { expected, computed });
    }
    Ok((decode_payload(t, &bytes[HEADER_LEN..body_end])?, total))
}

/// Decodes exactly one frame; extra bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<TelemetryMessage, DecodeError> {
    let (msg, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    Ok(msg)
}
