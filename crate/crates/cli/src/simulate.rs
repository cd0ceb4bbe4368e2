//! simulate and serve-station.

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::Args;
use dropsight::mission::{parse_scenario, Mode, Simulator};
use dropsight::telemetry::{encode, BridgeMessage, FrameBuffer, TelemetryMessage};

use crate::bridge::{Hub, Server};
use crate::config::RunConfig;
use crate::wire::format_message;
use crate::{invalid, CmdResult, Failure};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's mode (piloted or autonomous).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the mission log here instead of stdout.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Append every downlink frame to this file.
    #[arg(long)]
    pub downlink: Option<PathBuf>,
    /// Serve the station bridge on this port (0 picks a free port).
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Wall-clock milliseconds per frame; defaults to the scenario frame
    /// rate with a bridge and to 0 without one.
    #[arg(long)]
    pub pace_ms: Option<u64>,
    /// Hold the first frame until a station connects.
    #[arg(long)]
    pub wait_for_station: bool,
    /// Seconds to keep the bridge up after the mission ends.
    #[arg(long)]
    pub linger_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Recorded downlink stream to relay, one frame per interval.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub interval_ms: u64,
    /// Append frames sent by stations to this file.
    #[arg(long)]
    pub uplink: Option<PathBuf>,
    /// Stop after the replay ends and the linger time passes.
    #[arg(long)]
    pub exit_after_replay: bool,
    #[arg(long)]
    pub linger_s: Option<f64>,
}

fn linger(cfg: &RunConfig, v: Option<f64>) -> Result<Duration, Failure> {
    let s = v.unwrap_or(cfg.station.linger_s);
    if !(s.is_finite() && s >= 0.0) {
        return invalid(format!("--linger-s must be a non-negative number, got {s}"));
    }
    Ok(Duration::from_secs_f64(s))
}

fn bind(port: u16, err: &mut dyn Write) -> Result<TcpListener, Failure> {
    let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
    let addr = listener.local_addr()?;
    writeln!(err, "station bridge listening on http://{addr}/")?;
    err.flush()?;
    Ok(listener)
}

fn append(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

pub(crate) fn simulate_cmd(a: SimulateArgs, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let text = fs::read_to_string(&a.scenario).with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut sc = parse_scenario(&text).map_err(|e| anyhow::anyhow!("{}: {e}", a.scenario.display()))?;
    if let Some(m) = &a.mode {
        sc.mode = m.parse::<Mode>().or_else(invalid)?;
    }
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    let linger = linger(cfg, a.linger_s)?;
    if let Some(p) = &a.downlink {
        fs::write(p, b"").with_context(|| format!("creating {}", p.display()))?;
    }
    let frame_period = Duration::from_secs_f64(1.0 / sc.frame_rate_hz);
    let mut sim = Simulator::new(sc).map_err(|e| anyhow::anyhow!("scenario: {e}"))?;

    let bridge = match a.port {
        Some(port) => {
            let listener = bind(port, err)?;
            let (tx, rx) = mpsc::channel();
            let hub = Hub::new(Some(tx));
            let (lat, lon) = sim.local_frame().to_geo(sim.zone().drop_point());
            hub.set_zone(&BridgeMessage::Zone {
                lat_e7: (lat * 1e7).round() as i32,
                lon_e7: (lon * 1e7).round() as i32,
                radius_m: sim.zone().safety_radius_m(),
                min_confidence: sim.zone().min_confidence(),
                required_clear_frames: sim.zone().required_clear_frames(),
            });
            hub.set_link(true);
            let server = Server::start(listener, hub.clone(), a.assets.clone())?;
            Some((server, hub, rx))
        }
        None => None,
    };
    let pace = match (a.pace_ms, &bridge) {
        (Some(ms), _) => Duration::from_millis(ms),
        (None, Some(_)) => frame_period,
        (None, None) => Duration::ZERO,
    };
    if a.wait_for_station {
        let Some((_, hub, _)) = &bridge else {
            return invalid("--wait-for-station needs --port");
        };
        while hub.connections() == 0 {
            thread::sleep(Duration::from_millis(20));
        }
    }

    while !sim.is_finished() {
        let started = Instant::now();
        let uplink: Vec<u8> = match &bridge {
            Some((_, _, rx)) => rx.try_iter().flatten().collect(),
            None => Vec::new(),
        };
        let downlink = sim.advance(&uplink).map_err(|e| anyhow::anyhow!("simulation: {e}"))?;
        if let Some(p) = &a.downlink {
            append(p, &downlink)?;
        }
        if let Some((_, hub, _)) = &bridge {
            hub.publish_downlink(&downlink);
            hub.set_link(sim.link_up());
        }
        if let Some(rest) = pace.checked_sub(started.elapsed()) {
            thread::sleep(rest);
        }
    }

    let log = sim.into_log();
    match &a.log {
        Some(p) => {
            fs::write(p, log.to_text()).with_context(|| format!("writing {}", p.display()))?;
            if let Some(o) = log.outcome() {
                writeln!(out, "outcome\t{o}")?;
            }
        }
        None => out.write_all(log.to_text().as_bytes())?,
    }
    out.flush()?;
    if let Some((server, _, _)) = bridge {
        thread::sleep(linger);
        server.shutdown();
    }
    Ok(())
}

fn load_replay(path: &Path) -> anyhow::Result<Vec<TelemetryMessage>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut buf = FrameBuffer::new();
    buf.push(&bytes);
    let mut msgs = Vec::new();
    while let Some(item) = buf.next_frame() {
        match item {
            Ok((m, _)) => msgs.push(m),
            Err(e) => eprintln!("replay: skipping malformed frame: {e}"),
        }
    }
    Ok(msgs)
}

pub(crate) fn serve_cmd(a: ServeArgs, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let linger = linger(cfg, a.linger_s)?;
    if a.exit_after_replay && a.replay.is_none() {
        return invalid("--exit-after-replay needs --replay");
    }
    let replay = match &a.replay {
        Some(p) => load_replay(p)?,
        None => Vec::new(),
    };
    let listener = bind(a.port.unwrap_or(cfg.station.port), err)?;
    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let hub = Hub::new(Some(tx));
    let server = Server::start(listener, hub.clone(), a.assets.clone())?;
    let interval = Duration::from_millis(a.interval_ms);
    let mut next = 0usize;
    let mut due = Instant::now();
    let mut done_at: Option<Instant> = None;
    loop {
        if let Ok(frame) = rx.recv_timeout(Duration::from_millis(10)) {
            if let Some(p) = &a.uplink {
                append(p, &frame)?;
            }
            let mut buf = FrameBuffer::new();
            buf.push(&frame);
            while let Some(Ok((m, _))) = buf.next_frame() {
                writeln!(out, "uplink\t{}", format_message(&m))?;
            }
            out.flush()?;
        }
        if next < replay.len() && Instant::now() >= due {
            hub.publish_downlink(&encode(&replay[next]).map_err(|e| anyhow::anyhow!("{e}"))?);
            next += 1;
            due += interval;
        }
        if a.exit_after_replay && next == replay.len() {
            let t = *done_at.get_or_insert_with(Instant::now);
            if t.elapsed() >= linger {
                break;
            }
        }
    }
    server.shutdown();
    Ok(())
}
