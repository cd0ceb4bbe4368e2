//! External models driven through files.
//!
//! For each patch the adapter creates a scratch directory, writes the patch as
//! `patch.pgm` (1 channel) or `patch.ppm` (3 channels) and runs
//! `program [args...] <patch> <output>`. Segmenters must write a PFM or
//! 8-bit PGM probability map to `<output>` (`scores.pfm`); detectors write
//! the line-oriented detection list (`detections.txt`).

use std::path::{Path, PathBuf};
use std::process::Command;

use super::{DetectionModel, GsdRange, ModelError, SegmentationModel};
use crate::detection::{parse_detection_list, Detection};
use crate::geocore::Gsd;
use crate::raster::{read_probability_grid, write_grid_u8, Grid};

#[derive(Debug, Clone)]
struct Invocation {
    name: String,
    program: PathBuf,
    args: Vec<String>,
}

impl Invocation {
    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::Subprocess {
            model: self.name.clone(),
            message: message.into(),
        }
    }

    /// Runs the program on `patch` and returns the scratch dir and output path.
    fn run(&self, patch: &Grid<u8>, output_name: &str) -> Result<(tempfile::TempDir, PathBuf), ModelError> {
        let dir = tempfile::tempdir().map_err(|e| self.err(format!("scratch directory: {e}")))?;
        let input = dir.path().join(if patch.channels() == 1 { "patch.pgm" } else { "patch.ppm" });
        let output = dir.path().join(output_name);
        write_grid_u8(&input, patch)?;
        let result = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .output()
            .map_err(|e| self.err(format!("cannot start {}: {e}", self.program.display())))?;
        if !result.status.success() {
            let stderr = String::from_utf8_lossy(&result.stderr);
            return Err(self.err(format!("exited with {}: {}", result.status, stderr.trim())));
        }
        if !output.exists() {
            return Err(self.err(format!("did not write {}", file_name(&output))));
        }
        Ok((dir, output))
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct SubprocessSegmenter {
    inv: Invocation,
    required_gsd: Gsd,
}

impl SubprocessSegmenter {
    pub fn new(name: impl Into<String>, program: impl Into<PathBuf>, args: Vec<String>, required_gsd: Gsd) -> Self {
        Self {
            inv: Invocation {
                name: name.into(),
                program: program.into(),
                args,
            },
            required_gsd,
        }
    }
}

impl SegmentationModel for SubprocessSegmenter {
    fn name(&self) -> &str {
        &self.inv.name
    }

    fn required_gsd(&self) -> Gsd {
        self.required_gsd
    }

    fn infer(&self, patch: &Grid<u8>) -> Result<Grid<f32>, ModelError> {
        let (_dir, out) = self.inv.run(patch, "scores.pfm")?;
        Ok(read_probability_grid(&out)?)
    }

    fn is_reentrant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct SubprocessDetector {
    inv: Invocation,
    valid_gsd: GsdRange,
}

impl SubprocessDetector {
    pub fn new(name: impl Into<String>, program: impl Into<PathBuf>, args: Vec<String>, valid_gsd: GsdRange) -> Self {
        Self {
            inv: Invocation {
                name: name.into(),
                program: program.into(),
                args,
            },
            valid_gsd,
        }
    }
}

impl DetectionModel for SubprocessDetector {
    fn name(&self) -> &str {
        &self.inv.name
    }

    fn valid_gsd_range(&self) -> GsdRange {
        self.valid_gsd
    }

    fn infer(&self, patch: &Grid<u8>) -> Result<Vec<Detection>, ModelError> {
        let (_dir, out) = self.inv.run(patch, "detections.txt")?;
        let text = std::fs::read_to_string(&out).map_err(|e| self.inv.err(format!("reading detections: {e}")))?;
        parse_detection_list(&text).map_err(|(line, msg)| self.inv.err(format!("detections.txt line {line}: {msg}")))
    }

    fn is_reentrant(&self) -> bool {
        false
    }
}
