//! encode / decode: telemetry debugging helpers.

use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use dropsight::mission::MissionState;
use dropsight::telemetry::{encode, BridgeMessage, Command, FrameBuffer, TelemetryMessage, WireDetection};

use crate::{invalid, CmdResult, Failure};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MessageKind {
    Report,
    Command,
    Ack,
    Heartbeat,
    Status,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CommandArg {
    Release,
    Abort,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StateArg {
    Enroute,
    Assessing,
    AwaitingOperator,
    ReleaseCleared,
    Released,
    Aborted,
}

impl From<StateArg> for MissionState {
    fn from(s: StateArg) -> Self {
        match s {
            StateArg::Enroute => Self::Enroute,
            StateArg::Assessing => Self::Assessing,
            StateArg::AwaitingOperator => Self::AwaitingOperator,
            StateArg::ReleaseCleared => Self::ReleaseCleared,
            StateArg::Released => Self::Released,
            StateArg::Aborted => Self::Aborted,
        }
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(value_enum)]
    pub message: MessageKind,
    #[arg(long, default_value_t = 0)]
    pub frame: u32,
    #[arg(long, default_value_t = 0)]
    pub time_ms: u64,
    #[arg(long, value_enum)]
    pub command: Option<CommandArg>,
    /// Detections for a report, one "lat lon width_m height_m confidence" per line.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub state: Option<StateArg>,
    #[arg(long, default_value_t = 0)]
    pub clear_frames: u8,
    /// Write the raw frame here instead of printing hex.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the bridge JSON form as well.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Frame stream file, or "-" for stdin.
    pub input: PathBuf,
    /// Input is hex text (whitespace ignored) rather than raw bytes.
    #[arg(long)]
    pub hex: bool,
    /// Print bridge JSON lines instead of tab-separated fields.
    #[arg(long)]
    pub json: bool,
}

fn parse_wire_detections(text: &str) -> Result<Vec<WireDetection>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| format!("line {}: cannot parse {f:?}", i + 1)))
            .collect::<Result<_, _>>()?;
        if v.len() != 5 {
            return Err(format!("line {}: expected 5 fields, found {}", i + 1, v.len()));
        }
        out.push(WireDetection::from_values(v[0], v[1], v[2], v[3], v[4]));
    }
    Ok(out)
}

fn build_message(a: &EncodeArgs) -> Result<TelemetryMessage, Failure> {
    Ok(match a.message {
        MessageKind::Report => {
            let detections = match &a.detections {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    parse_wire_detections(&text).map_err(|m| anyhow::anyhow!("{}: {m}", p.display()))?
                }
                None => Vec::new(),
            };
            TelemetryMessage::DetectionReport {
                frame_id: a.frame,
                unix_time_ms: a.time_ms,
                detections,
            }
        }
        MessageKind::Command => {
            let command = match a.command {
                Some(CommandArg::Release) => Command::Release,
                Some(CommandArg::Abort) => Command::Abort,
                None => return invalid("a command message needs --command release|abort"),
            };
            TelemetryMessage::DropCommand {
                frame_id: a.frame,
                command,
            }
        }
        MessageKind::Ack => TelemetryMessage::Ack { frame_id: a.frame },
        MessageKind::Heartbeat => TelemetryMessage::Heartbeat {
            unix_time_ms: a.time_ms,
        },
        MessageKind::Status => {
            let Some(state) = a.state else {
                return invalid("a status message needs --state");
            };
            TelemetryMessage::MissionStatus {
                frame_id: a.frame,
                state: state.into(),
                clear_frames: a.clear_frames,
            }
        }
    })
}

pub(crate) fn encode_cmd(a: EncodeArgs, out: &mut dyn Write) -> CmdResult {
    let msg = build_message(&a)?;
    let bytes = encode(&msg).or_else(|e| invalid(e.to_string()))?;
    match &a.out {
        Some(p) => fs::write(p, &bytes).with_context(|| format!("writing {}", p.display()))?,
        None => writeln!(out, "{}", hex::encode(&bytes))?,
    }
    if a.json {
        writeln!(out, "{}", BridgeMessage::from_telemetry(&msg).to_json())?;
    }
    Ok(())
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Release => "release",
        Command::Abort => "abort",
    }
}

/// One tab-separated line per message; reports add one `detection` line per
/// record.
pub fn format_message(msg: &TelemetryMessage) -> String {
    match msg {
        TelemetryMessage::DetectionReport {
            frame_id,
            unix_time_ms,
            detections,
        } => {
            let mut s = format!("DetectionReport\t{frame_id}\t{unix_time_ms}\t{}", detections.len());
            for d in detections {
                s.push_str(&format!(
                    "\ndetection\t{:.7}\t{:.7}\t{:.2}\t{:.2}\t{:.4}",
                    d.lat_deg(),
                    d.lon_deg(),
                    d.width_m(),
                    d.height_m(),
                    d.confidence()
                ));
            }
            s
        }
        TelemetryMessage::DropCommand { frame_id, command } => {
            format!("DropCommand\t{frame_id}\t{}", command_name(*command))
        }
        TelemetryMessage::Ack { frame_id } => format!("Ack\t{frame_id}"),
        TelemetryMessage::Heartbeat { unix_time_ms } => format!("Heartbeat\t{unix_time_ms}"),
        TelemetryMessage::MissionStatus {
            frame_id,
            state,
            clear_frames,
        } => format!("MissionStatus\t{frame_id}\t{state}\t{clear_frames}"),
    }
}

pub(crate) fn decode_cmd(a: DecodeArgs, out: &mut dyn Write) -> CmdResult {
    let mut raw = Vec::new();
    if a.input.as_os_str() == "-" {
        std::io::stdin().read_to_end(&mut raw)?;
    } else {
        raw = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    }
    let bytes = if a.hex {
        let text: String = String::from_utf8_lossy(&raw).split_whitespace().collect();
        hex::decode(text).context("input is not valid hex")?
    } else {
        raw
    };
    let mut buf = FrameBuffer::new();
    buf.push(&bytes);
    let mut errors = 0usize;
    while let Some(item) = buf.next_frame() {
        match item {
            Ok((msg, _)) if a.json => writeln!(out, "{}", BridgeMessage::from_telemetry(&msg).to_json())?,
            Ok((msg, _)) => writeln!(out, "{}", format_message(&msg))?,
            Err(e) => {
                errors += 1;
                writeln!(out, "error\t{e}")?;
            }
        }
    }
    if buf.pending() > 0 {
        errors += 1;
        writeln!(out, "error\t{} trailing bytes form an incomplete frame", buf.pending())?;
    }
    if errors > 0 {
        return Err(anyhow::anyhow!("{errors} malformed frame(s), {} byte(s) skipped", buf.discarded()).into());
    }
    Ok(())
}
