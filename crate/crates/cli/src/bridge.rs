//! Station bridge: one TCP port serving the station's static assets over
//! HTTP and a JSON WebSocket at `/ws`.
//!
//! Downlink frames are decoded and broadcast as [`BridgeMessage`] JSON.
//! Clients receive the zone, link state and latest status/report on connect.
//! Inbound `dropCommand` messages are re-encoded as wire frames and forwarded
//! to the uplink channel.

use std::fs;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use dropsight::telemetry::{encode, BridgeMessage, FrameBuffer, TelemetryMessage};
use tungstenite::handshake::HandshakeError;
use tungstenite::{Message, WebSocket};

const POLL: Duration = Duration::from_millis(25);
const HEADER_LIMIT: usize = 16 * 1024;
const HEADER_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Default)]
struct HubState {
    clients: Vec<Sender<String>>,
    zone: Option<String>,
    link: Option<String>,
    status: Option<String>,
    report: Option<String>,
    decoder: FrameBuffer,
}

/// Fan-out point between the vehicle side and connected stations.
pub struct Hub {
    state: Mutex<HubState>,
    uplink: Option<Mutex<Sender<Vec<u8>>>>,
    connections: AtomicUsize,
}

impl Hub {
    /// `uplink` receives encoded frames for commands sent by stations.
    pub fn new(uplink: Option<Sender<Vec<u8>>>) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(HubState::default()),
            uplink: uplink.map(Mutex::new),
            connections: AtomicUsize::new(0),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HubState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// WebSocket clients accepted so far.
    pub fn connections(&self) -> usize {
        self.connections.load(Ordering::SeqCst)
    }

    pub fn set_zone(&self, zone: &BridgeMessage) {
        let json = zone.to_json();
        let mut st = self.lock();
        st.zone = Some(json.clone());
        broadcast(&mut st, json);
    }

    pub fn set_link(&self, up: bool) {
        let json = BridgeMessage::Link { up }.to_json();
        let mut st = self.lock();
        if st.link.as_deref() == Some(json.as_str()) {
            return;
        }
        st.link = Some(json.clone());
        broadcast(&mut st, json);
    }

    /// Decodes downlink bytes (any framing split) and broadcasts each
    /// complete message. Returns the number of malformed frames skipped.
    pub fn publish_downlink(&self, bytes: &[u8]) -> usize {
        let mut st = self.lock();
        st.decoder.push(bytes);
        let mut bad = 0;
        while let Some(item) = st.decoder.next_frame() {
            match item {
                Ok((msg, _)) => {
                    let json = BridgeMessage::from_telemetry(&msg).to_json();
                    match msg {
                        TelemetryMessage::MissionStatus { .. } => st.status = Some(json.clone()),
                        TelemetryMessage::DetectionReport { .. } => st.report = Some(json.clone()),
                        _ => {}
                    }
                    broadcast(&mut st, json);
                }
                Err(_) => bad += 1,
            }
        }
        bad
    }

    /// Validates a station message and forwards it as a wire frame.
    pub fn handle_inbound(&self, text: &str) -> Result<(), String> {
        let msg = BridgeMessage::from_json(text).map_err(|e| format!("invalid message: {e}"))?;
        if !matches!(msg, BridgeMessage::DropCommand { .. }) {
            return Err("stations may only send dropCommand".into());
        }
        let frame = msg
            .to_telemetry()
            .ok_or("dropCommand has no wire form")
            .and_then(|m| encode(&m).map_err(|_| "dropCommand does not encode"))?;
        let Some(tx) = &self.uplink else {
            return Err("no vehicle uplink attached".into());
        };
        tx.lock()
            .unwrap_or_else(|p| p.into_inner())
            .send(frame)
            .map_err(|_| "vehicle uplink closed".to_string())
    }

    fn subscribe(&self) -> (Receiver<String>, Vec<String>) {
        let (tx, rx) = mpsc::channel();
        let mut st = self.lock();
        st.clients.push(tx);
        let snapshot = [&st.zone, &st.link, &st.status, &st.report]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        self.connections.fetch_add(1, Ordering::SeqCst);
        (rx, snapshot)
    }
}

fn broadcast(st: &mut HubState, json: String) {
    st.clients.retain(|c| c.send(json.clone()).is_ok());
}

/// A running bridge. Dropping it without [`Server::shutdown`] leaves the
/// accept loop running until process exit.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

impl Server {
    pub fn start(listener: TcpListener, hub: Arc<Hub>, assets: Option<PathBuf>) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let assets = Arc::new(assets);
        let handle = thread::spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let (hub, assets, flag) = (hub.clone(), assets.clone(), flag.clone());
                        thread::spawn(move || {
                            if let Err(e) = handle_connection(stream, &hub, assets.as_deref(), &flag) {
                                if !matches!(e.kind(), io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset) {
                                    eprintln!("bridge: connection error: {e}");
                                }
                            }
                        });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(e) => {
                        eprintln!("bridge: accept failed: {e}");
                        thread::sleep(POLL);
                    }
                }
            }
        });
        Ok(Self { addr, stop, handle })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and signals open sockets to close.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.handle.join();
    }
}

struct Request {
    method: String,
    path: String,
    upgrade: bool,
    header_len: usize,
}

fn parse_request(head: &[u8]) -> Option<Request> {
    let end = head.windows(4).position(|w| w == b"\r\n\r\n")? + 4;
    let text = std::str::from_utf8(&head[..end]).ok()?;
    let mut lines = text.split("\r\n");
    let mut first = lines.next()?.split_whitespace();
    let method = first.next()?.to_string();
    let path = first.next()?.to_string();
    let upgrade = lines.filter_map(|l| l.split_once(':')).any(|(k, v)| {
        k.trim().eq_ignore_ascii_case("upgrade") && v.trim().eq_ignore_ascii_case("websocket")
    });
    Some(Request {
        method,
        path,
        upgrade,
        header_len: end,
    })
}

/// Peeks until the request head is complete so the WebSocket handshake can
/// still read it from the socket.
fn peek_request(stream: &TcpStream) -> io::Result<Option<Request>> {
    let mut buf = vec![0u8; HEADER_LIMIT];
    let deadline = Instant::now() + HEADER_TIMEOUT;
    loop {
        match stream.peek(&mut buf) {
            Ok(0) => return Ok(None),
            Ok(n) => {
                if let Some(r) = parse_request(&buf[..n]) {
                    return Ok(Some(r));
                }
                if n == buf.len() {
                    return Ok(None);
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        if Instant::now() > deadline {
            return Ok(None);
        }
    }
}

fn handle_connection(mut stream: TcpStream, hub: &Hub, assets: Option<&Path>, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let Some(req) = peek_request(&stream)? else {
        return respond(&mut stream, 400, "text/plain", b"bad request\n", false);
    };
    let path = req.path.split(['?', '#']).next().unwrap_or("/").to_string();
    if req.upgrade {
        if path != "/ws" {
            return respond(&mut stream, 404, "text/plain", b"not found\n", false);
        }
        return websocket(stream, hub, stop);
    }
    let mut head = vec![0u8; req.header_len];
    stream.set_read_timeout(Some(HEADER_TIMEOUT))?;
    stream.read_exact(&mut head)?;
    let head_only = req.method == "HEAD";
    if req.method != "GET" && !head_only {
        return respond(&mut stream, 405, "text/plain", b"method not allowed\n", false);
    }
    match resolve_asset(assets, &path) {
        Asset::File(p) => match fs::read(&p) {
            Ok(body) => respond(&mut stream, 200, content_type(&p), &body, head_only),
            Err(_) => respond(&mut stream, 404, "text/plain", b"not found\n", head_only),
        },
        Asset::Fallback => respond(&mut stream, 200, "text/html; charset=utf-8", FALLBACK_PAGE.as_bytes(), head_only),
        Asset::Forbidden => respond(&mut stream, 400, "text/plain", b"bad path\n", head_only),
        Asset::Missing => respond(&mut stream, 404, "text/plain", b"not found\n", head_only),
    }
}

enum Asset {
    File(PathBuf),
    Fallback,
    Forbidden,
    Missing,
}

fn resolve_asset(root: Option<&Path>, url_path: &str) -> Asset {
    let rel = url_path.trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') {
        format!("{rel}index.html")
    } else {
        rel.to_string()
    };
    let rel_path = Path::new(&rel);
    if !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
        return Asset::Forbidden;
    }
    if let Some(root) = root {
        let p = root.join(rel_path);
        if p.is_file() {
            return Asset::File(p);
        }
    }
    if rel == "index.html" {
        Asset::Fallback
    } else {
        Asset::Missing
    }
}

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "wasm" => "application/wasm",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn respond(stream: &mut TcpStream, code: u16, ctype: &str, body: &[u8], head_only: bool) -> io::Result<()> {
    let reason = match code {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {code} {reason}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nCache-Control: no-cache\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    if !head_only {
        stream.write_all(body)?;
    }
    stream.flush()
}

fn ws_err(e: tungstenite::Error) -> io::Error {
    match e {
        tungstenite::Error::Io(e) => e,
        other => io::Error::other(other),
    }
}

fn websocket(stream: TcpStream, hub: &Hub, stop: &AtomicBool) -> io::Result<()> {
    let mut attempt = tungstenite::accept(stream);
    let deadline = Instant::now() + HEADER_TIMEOUT;
    let mut ws: WebSocket<TcpStream> = loop {
        match attempt {
            Ok(ws) => break ws,
            Err(HandshakeError::Interrupted(mid)) if Instant::now() < deadline => attempt = mid.handshake(),
            Err(HandshakeError::Interrupted(_)) => return Err(io::ErrorKind::TimedOut.into()),
            Err(HandshakeError::Failure(e)) => return Err(ws_err(e)),
        }
    };
    let (rx, snapshot) = hub.subscribe();
    for json in snapshot {
        ws.send(Message::text(json)).map_err(ws_err)?;
    }
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        for json in rx.try_iter() {
            ws.send(Message::text(json)).map_err(ws_err)?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if let Err(e) = hub.handle_inbound(text.as_str()) {
                    eprintln!("bridge: rejected station message: {e}");
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(ws_err(e)),
        }
    }
}

/// Served at `/` when no asset directory (or no index.html in it) is given.
const FALLBACK_PAGE: &str = r#"<!doctype html>
<html>
<head><meta charset="utf-8"><title>dropsight station</title>
<style>body{font-family:monospace;margin:1em}#log{white-space:pre;height:70vh;overflow:auto;border:1px solid #999;padding:.5em}</style>
</head>
<body>
<h1>dropsight station</h1>
<p>State: <b id="state">unknown</b> clear frames: <b id="clear">0</b> link: <b id="link">?</b>
<button id="release">Release</button> <button id="abort">Abort</button></p>
<div id="log"></div>
<script>
const ws = new WebSocket(`ws://${location.host}/ws`);
const log = document.getElementById("log");
let frame = 0;
ws.onmessage = (ev) => {
  const m = JSON.parse(ev.data);
  if (m.frameId !== undefined) frame = m.frameId;
  if (m.type === "missionStatus") {
    document.getElementById("state").textContent = m.state;
    document.getElementById("clear").textContent = m.clearFrames;
  }
  if (m.type === "link") document.getElementById("link").textContent = m.up ? "up" : "down";
  log.textContent = ev.data + "\n" + log.textContent;
};
const send = (command) => ws.send(JSON.stringify({type: "dropCommand", frameId: frame, command}));
document.getElementById("release").onclick = () => send("release");
document.getElementById("abort").onclick = () => send("abort");
</script>
</body>
</html>
"#;
