//! `dropsight` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime
//! failure (I/O, malformed input files, model errors).

pub mod bridge;
mod commands;
pub mod config;
mod simulate;
mod wire;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Invalid(msg.into()))
}

pub(crate) type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "dropsight", version, about = "Drone imagery tiling, evaluation, telemetry and drop-zone simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the tile layout of an image and optionally write the tiles.
    Tile {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        tile: Option<usize>,
        #[arg(long)]
        overlap: Option<f64>,
        /// Write each tile with its world file into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Pixel size when the image has no world file.
        #[arg(long)]
        gsd: Option<f64>,
    },
    /// Tiled inference with a stub or external model.
    Infer {
        /// stub-blob, stub-threshold, exec-detector:PROGRAM or exec-segmenter:PROGRAM
        #[arg(long)]
        model: String,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        tile: Option<usize>,
        #[arg(long)]
        overlap: Option<f64>,
        /// NMS IoU threshold for detectors.
        #[arg(long)]
        nms: Option<f64>,
        /// Detection list (detectors) or probability map .pfm (segmenters).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        gsd: Option<f64>,
        /// Working GSD of a segmentation model; defaults to the image GSD.
        #[arg(long)]
        model_gsd: Option<f64>,
        /// Print geolocated detections (x, y, width_m, height_m, confidence).
        #[arg(long)]
        geo: bool,
        /// Extra argument passed to an external model (repeatable).
        #[arg(long = "model-arg", allow_hyphen_values = true)]
        model_args: Vec<String>,
    },
    /// Completeness, correctness and quality of a road mask.
    EvalRoad {
        #[arg(long)]
        pred: PathBuf,
        /// Reference centerlines, one "x,y x,y ..." polyline per line.
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        buffer: Option<f64>,
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        gsd: Option<f64>,
    },
    /// Pixel precision, recall, IoU and F1 of a binary mask.
    EvalSeg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        scene: Option<String>,
    },
    /// Precision, recall and AP of a detection list.
    EvalDet {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        scene: Option<String>,
    },
    /// Encode one telemetry message.
    Encode(wire::EncodeArgs),
    /// Decode a stream of telemetry frames.
    Decode(wire::DecodeArgs),
    /// Run a mission scenario, optionally with the station bridge.
    Simulate(simulate::SimulateArgs),
    /// Serve the station assets and relay a recorded telemetry stream.
    ServeStation(simulate::ServeArgs),
}

/// Parses `args` and runs the command, writing primary output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let config = match RunConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: config: {e}");
            return EXIT_INVALID;
        }
    };
    let result = match cli.command {
        Command::Tile { .. } | Command::Infer { .. } => commands::run_pipeline(cli.command, &config, out),
        Command::EvalRoad { .. } | Command::EvalSeg { .. } | Command::EvalDet { .. } => {
            commands::run_eval(cli.command, &config, out)
        }
        Command::Encode(a) => wire::encode_cmd(a, out),
        Command::Decode(a) => wire::decode_cmd(a, out),
        Command::Simulate(a) => simulate::simulate_cmd(a, &config, out, err),
        Command::ServeStation(a) => simulate::serve_cmd(a, &config, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
