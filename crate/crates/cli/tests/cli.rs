use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use dropsight::detection::parse_detection_list;
use dropsight::mission::{parse_scenario, run_simulation};
use dropsight::raster::{read_probability_map, sidecar_path_for, write_georaster};
use dropsight::telemetry::{decode, BridgeMessage, TelemetryMessage};
use dropsight::tiler::plan_tiles;
use dropsight::{GeoRaster, GeoTransform, Grid, Gsd, TileConfig, WorldCoord};
use tungstenite::Message;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dropsight"));
    c.env_remove("DROPSIGHT_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dropsight")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn write_image(dir: &Path, name: &str, w: usize, h: usize, gsd: f64, f: impl Fn(usize, usize) -> u8) -> PathBuf {
    let t = GeoTransform::north_up(WorldCoord::new(500.0, 900.0), Gsd::new(gsd).unwrap());
    let r = GeoRaster::new(Grid::from_fn(w, h, f).unwrap(), t).unwrap();
    let path = dir.join(name);
    write_georaster(&r, &path, &sidecar_path_for(&path)).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("simulate"));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["tile", "--image", "x.pgm", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn invalid_overlap_exits_one_missing_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_image(dir.path(), "a.pgm", 20, 20, 0.5, |_, _| 0);
    let o = run(&["tile", "--image", p(&img), "--overlap", "1.5"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = run(&["eval-det", "--pred", "/nonexistent/p.txt", "--gt", "/nonexistent/g.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn bad_config_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[tile]\nsiz = 3\n").unwrap();
    let o = bin().env("DROPSIGHT_CONFIG", &cfg).args(["encode", "ack"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tile_layout_matches_plan_and_writes_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_image(dir.path(), "scene.pgm", 1000, 600, 0.1, |r, c| ((r + c) % 256) as u8);
    let out_dir = dir.path().join("tiles");
    let o = run(&["tile", "--image", p(&img), "--out-dir", p(&out_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tile\trow0\tcol0\theight\twidth"));
    let plan = plan_tiles(1000, 600, TileConfig::default()).unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), plan.len());
    for (row, t) in rows.iter().zip(plan.tiles()) {
        assert_eq!(*row, format!("{}\t{}\t{}\t{}\t{}", t.index, t.row0, t.col0, t.height, t.width));
    }
    let last = plan.tiles().last().unwrap();
    let tile_path = out_dir.join(format!("tile_{:04}.pgm", last.index));
    let wld = fs::read_to_string(sidecar_path_for(&tile_path)).unwrap();
    let t = dropsight::geocore::parse_world_file(&wld).unwrap();
    assert!((t.origin_x() - (500.0 + last.col0 as f64 * 0.1)).abs() < 1e-9);
    assert!((t.origin_y() - (900.0 - last.row0 as f64 * 0.1)).abs() < 1e-9);
}

#[test]
fn infer_blob_detector_finds_squares() {
    let dir = tempfile::tempdir().unwrap();
    let bright = |r: usize, c: usize| (100..110).contains(&r) && ((50..60).contains(&c) || (700..712).contains(&c));
    let img = write_image(dir.path(), "people.pgm", 800, 300, 0.03, |r, c| if bright(r, c) { 230 } else { 20 });
    let list = dir.path().join("dets.txt");
    let o = run(&["infer", "--model", "stub-blob", "--image", p(&img), "--out", p(&list), "--geo"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dets = parse_detection_list(&fs::read_to_string(&list).unwrap()).unwrap();
    assert_eq!(dets.len(), 2);
    let mut cols: Vec<f64> = dets.iter().map(|d| d.bbox.col0()).collect();
    cols.sort_by(f64::total_cmp);
    assert_eq!(cols, [50.0, 700.0]);
    let geo = stdout(&o);
    assert_eq!(geo.lines().count(), 3);
    assert!(geo.starts_with("x\ty\twidth_m\theight_m\tconfidence\n"));
}

#[test]
fn infer_threshold_segmenter_writes_probability_map() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_image(dir.path(), "road.pgm", 100, 40, 0.25, |_, c| if c < 50 { 255 } else { 0 });
    let map = dir.path().join("road.pfm");
    let o = run(&[
        "infer", "--model", "stub-threshold", "--image", p(&img), "--out", p(&map), "--model-gsd", "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = read_probability_map(&map, &sidecar_path_for(&map)).unwrap();
    assert_eq!((m.width(), m.height()), (50, 20));
    assert_eq!(m.grid().get(0, 0, 0), 1.0);
    assert_eq!(m.grid().get(0, 49, 0), 0.0);
    assert_eq!(stdout(&o), "width\theight\tgsd_m\tpositive_px\n50\t20\t0.5\t500\n");

    let o = run(&["infer", "--model", "stub-threshold", "--image", p(&img), "--model-gsd", "0.1", "--out", p(&map)]);
    assert_eq!(o.status.code(), Some(2), "upsampling must fail at runtime");
    let o = run(&["infer", "--model", "nope", "--image", p(&img)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_commands_emit_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let road = write_image(dir.path(), "pred.pgm", 200, 100, 0.5, |r, _| if (48..53).contains(&r) { 255 } else { 0 });
    // row 50 center in world y: 900 - 50.5 * 0.5
    let reference = dir.path().join("ref.txt");
    fs::write(&reference, "# centerline\n500,874.75 600,874.75\n").unwrap();
    let o = run(&["eval-road", "--pred", p(&road), "--ref", p(&reference), "--scene", "s1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], dropsight::evalsuite::report::ROAD_HEADER);
    let header: Vec<&str> = lines[0].split('\t').collect();
    let row: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(header.len(), row.len());
    assert_eq!(row[0], "s1");
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()].parse::<f64>().unwrap();
    assert!((col("completeness") - 1.0).abs() < 1e-9);
    assert!((col("correctness") - 1.0).abs() < 1e-9);

    let o = run(&["eval-seg", "--pred", p(&road), "--gt", p(&road)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(row.starts_with("pred\t1.000000\t1.000000\t1.000000\t1.000000\t1000\t0\t0"), "{row}");

    let dets = dir.path().join("d.txt");
    fs::write(&dets, "0 0 10 10 0.9\n20 20 30 30 0.8\n").unwrap();
    let gt = dir.path().join("g.txt");
    fs::write(&gt, "0 0 10 10\n").unwrap();
    let o = run(&["eval-det", "--pred", p(&dets), "--gt", p(&gt), "--scene", "d"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let row: Vec<String> = stdout(&o).lines().nth(1).unwrap().split('\t').map(String::from).collect();
    assert_eq!(row[0], "d");
    assert_eq!(&row[5..], ["1", "1", "0"]);
    let o = run(&["eval-det", "--pred", p(&dets), "--gt", p(&gt), "--iou", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/wire").join(name);
    fs::read_to_string(path).unwrap().split_whitespace().collect::<String>().to_lowercase()
}

#[test]
fn encode_matches_wire_fixtures() {
    let o = run(&["encode", "heartbeat", "--time-ms", "1700000000000"]);
    assert_eq!(stdout(&o).trim(), fixture("heartbeat_1700000000000.hex"));
    let o = run(&["encode", "command", "--frame", "3", "--command", "release"]);
    assert_eq!(stdout(&o).trim(), fixture("drop_release_3.hex"));
    let o = run(&["encode", "status", "--frame", "5", "--state", "awaiting-operator", "--clear-frames", "3", "--json"]);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), fixture("status_5_awaiting_3.hex"));
    assert_eq!(
        lines.next().unwrap(),
        r#"{"type":"missionStatus","frameId":5,"state":"awaitingOperator","clearFrames":3,"wireBytes":18}"#
    );
    let o = run(&["encode", "command", "--frame", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn decode_stream_with_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("dets.txt");
    fs::write(&dets, "48.1 11.5 0.6 0.6 0.9\n48.1001 11.5002 0.5 0.7 0.4\n").unwrap();
    let report = dir.path().join("report.bin");
    let o = run(&["encode", "report", "--frame", "9", "--time-ms", "1234", "--detections", p(&dets), "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bytes = fs::read(&report).unwrap();
    assert_eq!(bytes.len(), 26 + 2 * 13);
    match decode(&bytes).unwrap() {
        TelemetryMessage::DetectionReport { frame_id, detections, .. } => {
            assert_eq!(frame_id, 9);
            assert_eq!(detections[0].lat_e7, 481_000_000);
        }
        other => panic!("{other:?}"),
    }

    let hex_file = dir.path().join("stream.hex");
    let ack = fixture("ack_7.hex");
    let mut bad = fixture("heartbeat_0.hex");
    bad.replace_range(20..22, "ff");
    fs::write(&hex_file, format!("{ack}\n{bad}\n{}\n", fixture("drop_abort_3.hex"))).unwrap();
    let o = run(&["decode", "--hex", p(&hex_file)]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "Ack\t7");
    assert!(lines[1].starts_with("error\t"), "{out}");
    assert_eq!(lines[2], "DropCommand\t3\tabort");

    let o = run(&["decode", p(&report), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let msg = BridgeMessage::from_json(stdout(&o).trim()).unwrap();
    assert!(matches!(msg, BridgeMessage::DetectionReport { wire_bytes: Some(52), .. }));
}

#[test]
fn simulate_is_deterministic_and_matches_library() {
    let scenario = repo_root().join("scenarios/walk_out.txt");
    let a = run(&["simulate", "--scenario", p(&scenario)]);
    let b = run(&["simulate", "--scenario", p(&scenario)]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let sc = parse_scenario(&fs::read_to_string(&scenario).unwrap()).unwrap();
    assert_eq!(stdout(&a), run_simulation(&sc).unwrap().to_text());
    assert!(stdout(&a).contains("-\toutcome\tReleased\tframe=8"));

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.tsv");
    let o = run(&["simulate", "--scenario", p(&scenario), "--mode", "piloted", "--log", p(&log)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("outcome\tIncomplete"), "{}", stdout(&o));
    assert!(fs::read_to_string(&log).unwrap().starts_with("# dropsight mission log v1\n"));

    let o = run(&["simulate", "--scenario", p(&scenario), "--mode", "manual"]);
    assert_eq!(o.status.code(), Some(1));
}

/// Spawns a bridge-serving command and returns the child with its address.
fn spawn_bridge(args: &[&str]) -> (Child, String) {
    let mut child = bin()
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stderr).lines().map_while(Result::ok) {
            if let Some(addr) = line.strip_prefix("station bridge listening on http://") {
                let _ = tx.send(addr.trim_end_matches('/').to_string());
            }
        }
    });
    let addr = rx.recv_timeout(Duration::from_secs(10)).expect("bridge address");
    (child, addr)
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\n\r\n").unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).unwrap();
    body
}

fn wait_exit(child: &mut Child, limit: Duration) -> i32 {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            return status.code().unwrap_or(-1);
        }
        if start.elapsed() > limit {
            let _ = child.kill();
            panic!("process did not exit in time");
        }
        thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn station_releases_piloted_drop_over_websocket() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = repo_root().join("scenarios/piloted_station.txt");
    let log = dir.path().join("log.tsv");
    let (mut child, addr) = spawn_bridge(&[
        "simulate",
        "--scenario",
        p(&scenario),
        "--port",
        "0",
        "--pace-ms",
        "40",
        "--wait-for-station",
        "--linger-s",
        "0",
        "--log",
        p(&log),
    ]);

    let page = http_get(&addr, "/");
    assert!(page.starts_with("HTTP/1.1 200 OK"));
    assert!(page.contains("text/html"));
    assert!(http_get(&addr, "/missing.js").starts_with("HTTP/1.1 404"));

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}/ws")).unwrap();
    let mut seen_zone = false;
    let mut sent = false;
    let mut final_state = None;
    loop {
        let msg = match ws.read() {
            Ok(Message::Text(t)) => BridgeMessage::from_json(t.as_str()).unwrap(),
            Ok(_) => continue,
            Err(_) => break,
        };
        match msg {
            BridgeMessage::Zone { radius_m, required_clear_frames, .. } => {
                assert_eq!((radius_m, required_clear_frames), (30.0, 3));
                seen_zone = true;
            }
            BridgeMessage::MissionStatus { frame_id, state, .. } => {
                use dropsight::mission::MissionState;
                if state == MissionState::AwaitingOperator && !sent {
                    let cmd = format!(r#"{{"type":"dropCommand","frameId":{frame_id},"command":"release"}}"#);
                    ws.send(Message::text(cmd)).unwrap();
                    sent = true;
                }
                if state.is_terminal() {
                    final_state = Some(state);
                    break;
                }
            }
            _ => {}
        }
    }
    assert!(seen_zone);
    assert!(sent);
    assert_eq!(final_state, Some(dropsight::mission::MissionState::Released));
    assert_eq!(wait_exit(&mut child, Duration::from_secs(20)), 0);
    let text = fs::read_to_string(&log).unwrap();
    assert!(text.contains("\trx\tDropCommand\t17\n"), "{text}");
    assert!(text.contains("-\toutcome\tReleased"), "{text}");
}

#[test]
fn serve_station_serves_assets_and_exits_after_replay() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("app.js"), "console.log(1)\n").unwrap();
    let replay = dir.path().join("empty.bin");
    fs::write(&replay, b"").unwrap();
    let (mut child, addr) = spawn_bridge(&[
        "serve-station",
        "--port",
        "0",
        "--assets",
        p(dir.path()),
        "--replay",
        p(&replay),
        "--exit-after-replay",
        "--linger-s",
        "2",
    ]);
    let r = http_get(&addr, "/app.js");
    assert!(r.starts_with("HTTP/1.1 200 OK"), "{r}");
    assert!(r.contains("text/javascript"));
    assert!(r.ends_with("console.log(1)\n"));
    assert!(http_get(&addr, "/../Cargo.toml").starts_with("HTTP/1.1 400"));
    assert_eq!(wait_exit(&mut child, Duration::from_secs(20)), 0);
}
