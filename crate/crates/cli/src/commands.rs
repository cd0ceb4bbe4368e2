//! tile, infer and the eval-* subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use dropsight::detection::{format_detection_list, geolocate, parse_detection_list};
use dropsight::evalsuite::report::{det_row, road_row, seg_row, DET_HEADER, ROAD_HEADER, SEG_HEADER};
use dropsight::evalsuite::{det_metrics, parse_polylines, road_metrics, seg_metrics};
use dropsight::models::{
    run_detection, run_segmentation, BlobDetector, DetectionModel, GsdRange, ModelError, SegmentationModel,
    SubprocessDetector, SubprocessSegmenter, ThresholdSegmenter,
};
use dropsight::raster::{read_georaster, read_grid_u8, sidecar_path_for, write_georaster, write_probability_map};
use dropsight::tiler::{extract_tile, plan_tiles};
use dropsight::{BinaryMask, GeoRaster, GeoTransform, Gsd, TileConfig, WorldCoord};

use crate::config::RunConfig;
use crate::{invalid, CmdResult, Command, Failure};

fn gsd_arg(name: &str, v: f64) -> Result<Gsd, Failure> {
    Gsd::new(v).or_else(|_| invalid(format!("--{name} must be a positive finite number, got {v}")))
}

/// Loads an 8-bit raster with its `.wld` sidecar, or with a north-up
/// transform at `gsd` anchored at the origin when no sidecar exists.
fn load_raster(path: &Path, gsd: Option<f64>) -> Result<GeoRaster<u8>, Failure> {
    let sidecar = sidecar_path_for(path);
    if !sidecar.exists() {
        if let Some(g) = gsd {
            let t = GeoTransform::north_up(WorldCoord::new(0.0, 0.0), gsd_arg("gsd", g)?);
            let grid = read_grid_u8(path).map_err(anyhow::Error::from)?;
            return Ok(GeoRaster::new(grid, t).map_err(anyhow::Error::from)?);
        }
    }
    Ok(read_georaster(path, &sidecar).map_err(anyhow::Error::from)?)
}

/// Masks need no georeference unless the metric does; missing sidecars fall
/// back to a unit pixel grid.
fn load_mask(path: &Path) -> Result<BinaryMask, Failure> {
    let sidecar = sidecar_path_for(path);
    let raster = if sidecar.exists() {
        read_georaster(path, &sidecar).map_err(anyhow::Error::from)?
    } else {
        let grid = read_grid_u8(path).map_err(anyhow::Error::from)?;
        GeoRaster::new(grid, GeoTransform::identity()).map_err(anyhow::Error::from)?
    };
    Ok(BinaryMask::from_nonzero(raster).with_context(|| format!("{}", path.display()))?)
}

fn tile_config(cfg: &RunConfig, tile: Option<usize>, overlap: Option<f64>) -> Result<TileConfig, Failure> {
    let size = tile.unwrap_or(cfg.tile.size);
    let overlap = overlap.unwrap_or(cfg.tile.overlap);
    TileConfig::new(size, overlap).or_else(|e| invalid(e.to_string()))
}

fn unit_interval(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        invalid(format!("--{name} must lie in (0, 1), got {v}"))
    }
}

fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::InvalidParameter(m) => Failure::Invalid(m),
        other => Failure::Runtime(other.into()),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn scene_name(scene: Option<String>, path: &Path) -> String {
    scene.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into())
    })
}

enum Model {
    Detector(Box<dyn DetectionModel>),
    Segmenter(Box<dyn SegmentationModel>),
}

fn build_model(
    spec: &str,
    cfg: &RunConfig,
    image_gsd: Gsd,
    model_gsd: Option<f64>,
    args: Vec<String>,
) -> Result<Model, Failure> {
    let seg_gsd = match model_gsd {
        Some(g) => gsd_arg("model-gsd", g)?,
        None => image_gsd,
    };
    if spec == "stub-blob" {
        let d = BlobDetector::new(cfg.detection.blob_threshold, cfg.detection.blob_min_area, usize::MAX)
            .map_err(model_failure)?;
        // The stub has no training resolution, so any GSD is accepted.
        let d = d.with_gsd_range(GsdRange::new(f64::MIN_POSITIVE, f64::MAX).map_err(model_failure)?);
        return Ok(Model::Detector(Box::new(d)));
    }
    if spec == "stub-threshold" {
        let s = ThresholdSegmenter::new(0, cfg.segmentation.threshold, seg_gsd);
        return Ok(Model::Segmenter(Box::new(s)));
    }
    if let Some(prog) = spec.strip_prefix("exec-detector:") {
        let d = SubprocessDetector::new(prog, prog, args, GsdRange::person_default());
        return Ok(Model::Detector(Box::new(d)));
    }
    if let Some(prog) = spec.strip_prefix("exec-segmenter:") {
        let s = SubprocessSegmenter::new(prog, prog, args, seg_gsd);
        return Ok(Model::Segmenter(Box::new(s)));
    }
    invalid(format!(
        "unknown model {spec:?}; expected stub-blob, stub-threshold, exec-detector:PROGRAM or exec-segmenter:PROGRAM"
    ))
}

pub(crate) fn run_pipeline(cmd: Command, cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Tile {
            image,
            tile,
            overlap,
            out_dir,
            gsd,
        } => {
            let tiles = tile_config(cfg, tile, overlap)?;
            let raster = if out_dir.is_some() {
                Some(load_raster(&image, gsd)?)
            } else {
                None
            };
            let grid = match &raster {
                Some(r) => r.grid().clone(),
                None => read_grid_u8(&image).map_err(anyhow::Error::from)?,
            };
            let plan = plan_tiles(grid.width(), grid.height(), tiles).or_else(|e| invalid(e.to_string()))?;
            writeln!(out, "tile\trow0\tcol0\theight\twidth")?;
            for t in plan.tiles() {
                writeln!(out, "{}\t{}\t{}\t{}\t{}", t.index, t.row0, t.col0, t.height, t.width)?;
            }
            if let (Some(dir), Some(r)) = (out_dir, raster) {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for t in plan.tiles() {
                    let patch = extract_tile(r.grid(), t).map_err(anyhow::Error::from)?;
                    let transform = r.transform().shifted(t.row0 as f64, t.col0 as f64);
                    let ext = if patch.channels() == 3 { "ppm" } else { "pgm" };
                    let path = dir.join(format!("tile_{:04}.{ext}", t.index));
                    let geo = GeoRaster::new(patch, transform).map_err(anyhow::Error::from)?;
                    write_georaster(&geo, &path, &sidecar_path_for(&path)).map_err(anyhow::Error::from)?;
                }
            }
            Ok(())
        }
        Command::Infer {
            model,
            image,
            tile,
            overlap,
            nms,
            out: out_path,
            gsd,
            model_gsd,
            geo,
            model_args,
        } => {
            let tiles = tile_config(cfg, tile, overlap)?;
            let nms = unit_interval("nms", nms.unwrap_or(cfg.detection.nms_iou))?;
            let raster = load_raster(&image, gsd)?;
            let image_gsd = raster.gsd().map_err(anyhow::Error::from)?;
            match build_model(&model, cfg, image_gsd, model_gsd, model_args)? {
                Model::Detector(m) => {
                    let dets = run_detection(m.as_ref(), &raster, tiles, nms).map_err(model_failure)?;
                    if geo {
                        writeln!(out, "x\ty\twidth_m\theight_m\tconfidence")?;
                        for g in geolocate(&dets, raster.transform()) {
                            writeln!(
                                out,
                                "{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.4}",
                                g.center.x, g.center.y, g.width_m, g.height_m, g.confidence
                            )?;
                        }
                    }
                    let text = format_detection_list(&dets);
                    match out_path {
                        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                        None if !geo => out.write_all(text.as_bytes())?,
                        None => {}
                    }
                    Ok(())
                }
                Model::Segmenter(m) => {
                    let Some(p) = out_path else {
                        return invalid("segmentation models need --out for the probability map");
                    };
                    let map = run_segmentation(m.as_ref(), &raster, tiles).map_err(model_failure)?;
                    write_probability_map(&map, &p, &sidecar_path_for(&p)).map_err(anyhow::Error::from)?;
                    let mask = BinaryMask::from_probability(&map, cfg.segmentation.mask_threshold)
                        .map_err(anyhow::Error::from)?;
                    writeln!(out, "width\theight\tgsd_m\tpositive_px")?;
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}",
                        map.width(),
                        map.height(),
                        map.gsd().map_err(anyhow::Error::from)?.meters(),
                        mask.count_ones()
                    )?;
                    Ok(())
                }
            }
        }
        _ => unreachable!("not a pipeline command"),
    }
}

pub(crate) fn run_eval(cmd: Command, cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::EvalRoad {
            pred,
            reference,
            buffer,
            scene,
            gsd,
        } => {
            let buffer = buffer.unwrap_or(cfg.road.buffer_m);
            if !(buffer.is_finite() && buffer >= 0.0) {
                return invalid(format!("--buffer must be a non-negative distance, got {buffer}"));
            }
            let raster = load_raster(&pred, gsd)?;
            let mask = BinaryMask::from_nonzero(raster).map_err(anyhow::Error::from)?;
            let lines = parse_polylines(&read_text(&reference)?)
                .map_err(|(line, msg)| anyhow::anyhow!("{}:{line}: {msg}", reference.display()))?;
            let m = road_metrics(&mask, &lines, buffer).map_err(anyhow::Error::from)?;
            writeln!(out, "{ROAD_HEADER}")?;
            writeln!(out, "{}", road_row(&scene_name(scene, &pred), &m))?;
            Ok(())
        }
        Command::EvalSeg { pred, gt, scene } => {
            let p = load_mask(&pred)?;
            let g = load_mask(&gt)?;
            let m = seg_metrics(&p, &g).map_err(anyhow::Error::from)?;
            writeln!(out, "{SEG_HEADER}")?;
            writeln!(out, "{}", seg_row(&scene_name(scene, &pred), &m))?;
            Ok(())
        }
        Command::EvalDet { pred, gt, iou, scene } => {
            let iou = iou.unwrap_or(cfg.detection.match_iou);
            if !(iou > 0.0 && iou <= 1.0) {
                return invalid(format!("--iou must lie in (0, 1], got {iou}"));
            }
            let parse = |path: &PathBuf| -> Result<_, Failure> {
                Ok(parse_detection_list(&read_text(path)?)
                    .map_err(|(line, msg)| anyhow::anyhow!("{}:{line}: {msg}", path.display()))?)
            };
            let m = det_metrics(&parse(&pred)?, &parse(&gt)?, iou);
            writeln!(out, "{DET_HEADER}")?;
            writeln!(out, "{}", det_row(&scene_name(scene, &pred), &m))?;
            Ok(())
        }
        _ => unreachable!("not an eval command"),
    }
}
