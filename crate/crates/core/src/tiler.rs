//! Overlapping tile plans, stitching of per-tile probability patches and
//! lifting of per-tile detections into image coordinates.

use thiserror::Error;

use crate::detection::Detection;
use crate::geocore::GeoTransform;
use crate::par;
use crate::raster::{GeoRaster, Grid, ProbabilityMap, RasterError, Sample};

#[derive(Debug, Error)]
pub enum TileError {
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: usize, height: usize },
    #[error("tile size must be at least 1")]
    ZeroTileSize,
    #[error("overlap fraction {0} outside [0, 1)")]
    InvalidOverlap(f64),
    #[error("overlap {overlap} with tile size {tile_size} leaves a stride below 1")]
    StrideTooSmall { tile_size: usize, overlap: f64 },
    #[error("expected {expected} tiles, got {found}")]
    TileCount { expected: usize, found: usize },
    #[error("tile {index}: expected {expected_w}x{expected_h}x1, got {found_w}x{found_h}x{found_c}")]
    TileShape {
        index: usize,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
        found_c: usize,
    },
    #[error("tile {index}: box ({r0}, {c0}, {r1}, {c1}) lies outside the {width}x{height} tile")]
    BoxOutsideTile {
        index: usize,
        r0: f64,
        c0: f64,
        r1: f64,
        c1: f64,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Tile size and overlap. Defaults to 416 px with 10 % overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileConfig {
    pub tile_size: usize,
    pub overlap: f64,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tile_size: 416,
            overlap: 0.10,
        }
    }
}

impl TileConfig {
    pub fn new(tile_size: usize, overlap: f64) -> Result<Self, TileError> {
        let cfg = Self { tile_size, overlap };
        cfg.stride()?;
        Ok(cfg)
    }

    pub fn stride(&self) -> Result<usize, TileError> {
        if self.tile_size == 0 {
            return Err(TileError::ZeroTileSize);
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(TileError::InvalidOverlap(self.overlap));
        }
        let overlap_px = (self.overlap * self.tile_size as f64).round() as usize;
        match self.tile_size.checked_sub(overlap_px) {
            Some(s) if s >= 1 => Ok(s),
            _ => Err(TileError::StrideTooSmall {
                tile_size: self.tile_size,
                overlap: self.overlap,
            }),
        }
    }
}

/// One tile of a plan. Edge tiles are narrower only when the image itself is
/// smaller than the tile size along that axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub index: usize,
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Tile {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row0 + self.height && col >= self.col0 && col < self.col0 + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    image_width: usize,
    image_height: usize,
    config: TileConfig,
    stride: usize,
    row_origins: Vec<usize>,
    col_origins: Vec<usize>,
    tiles: Vec<Tile>,
}

fn axis_origins(extent: usize, tile: usize, stride: usize) -> Vec<usize> {
    if extent <= tile {
        return vec![0];
    }
    let n = (extent - tile).div_ceil(stride) + 1;
    let mut origins: Vec<usize> = (0..n).map(|k| k * stride).collect();
    origins[n - 1] = extent - tile;
    origins
}

/// Plans row-major tiles over a `width x height` image.
pub fn plan_tiles(width: usize, height: usize, config: TileConfig) -> Result<TilePlan, TileError> {
    if width == 0 || height == 0 {
        return Err(TileError::ZeroArea { width, height });
    }
    let stride = config.stride()?;
    let row_origins = axis_origins(height, config.tile_size, stride);
    let col_origins = axis_origins(width, config.tile_size, stride);
    let th = config.tile_size.min(height);
    let tw = config.tile_size.min(width);
    let mut tiles = Vec::with_capacity(row_origins.len() * col_origins.len());
    for &row0 in &row_origins {
        for &col0 in &col_origins {
            tiles.push(Tile {
                index: tiles.len(),
                row0,
                col0,
                height: th,
                width: tw,
            });
        }
    }
    Ok(TilePlan {
        image_width: width,
        image_height: height,
        config,
        stride,
        row_origins,
        col_origins,
        tiles,
    })
}

impl TilePlan {
    pub fn image_width(&self) -> usize {
        self.image_width
    }
    pub fn image_height(&self) -> usize {
        self.image_height
    }
    pub fn config(&self) -> TileConfig {
        self.config
    }
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }
    pub fn len(&self) -> usize {
        self.tiles.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
    pub fn row_origins(&self) -> &[usize] {
        &self.row_origins
    }
    pub fn col_origins(&self) -> &[usize] {
        &self.col_origins
    }
    /// `(rows, cols)` of the tile grid.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.row_origins.len(), self.col_origins.len())
    }
}

pub fn extract_tile<T: Sample>(grid: &Grid<T>, tile: &Tile) -> Result<Grid<T>, TileError> {
    Ok(grid.crop(tile.row0, tile.col0, tile.height, tile.width)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Blend {
    #[default]
    Max,
    Average,
}

/// Reassembles single-channel per-tile patches into a full-image map.
pub fn stitch_masks(
    plan: &TilePlan,
    tile_maps: &[Grid<f32>],
    transform: GeoTransform,
    blend: Blend,
) -> Result<ProbabilityMap, TileError> {
    if tile_maps.len() != plan.len() {
        return Err(TileError::TileCount {
            expected: plan.len(),
            found: tile_maps.len(),
        });
    }
    for (t, g) in plan.tiles.iter().zip(tile_maps) {
        if g.width() != t.width || g.height() != t.height || g.channels() != 1 {
            return Err(TileError::TileShape {
                index: t.index,
                expected_w: t.width,
                expected_h: t.height,
                found_w: g.width(),
                found_h: g.height(),
                found_c: g.channels(),
            });
        }
    }
    let w = plan.image_width;
    let init = match blend {
        Blend::Max => f32::NEG_INFINITY,
        Blend::Average => 0.0,
    };
    let mut data = vec![init; w * plan.image_height];
    par::for_each_chunk_mut(&mut data, w, |r, row| {
        let mut counts = match blend {
            Blend::Average => vec![0u32; w],
            Blend::Max => Vec::new(),
        };
        for (t, g) in plan.tiles.iter().zip(tile_maps) {
            if r < t.row0 || r >= t.row0 + t.height {
                continue;
            }
            let src = g.row(r - t.row0);
            let dst = &mut row[t.col0..t.col0 + t.width];
            match blend {
                Blend::Max => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = d.max(s)),
                Blend::Average => {
                    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                    counts[t.col0..t.col0 + t.width]
                        .iter_mut()
                        .for_each(|c| *c += 1);
                }
            }
        }
        if blend == Blend::Average {
            row.iter_mut()
                .zip(&counts)
                .for_each(|(d, &c)| *d /= c as f32);
        }
    });
    Ok(GeoRaster::new(
        Grid::new(w, plan.image_height, 1, data)?,
        transform,
    )?)
}

/// Translates per-tile detections into image pixel coordinates. No dedup.
pub fn lift_detections(plan: &TilePlan, per_tile: &[Vec<Detection>]) -> Result<Vec<Detection>, TileError> {
    if per_tile.len() != plan.len() {
        return Err(TileError::TileCount {
            expected: plan.len(),
            found: per_tile.len(),
        });
    }
    let mut out = Vec::with_capacity(per_tile.iter().map(Vec::len).sum());
    for (t, dets) in plan.tiles.iter().zip(per_tile) {
        for d in dets {
            if !d.bbox.within(t.height as f64, t.width as f64) {
                let [r0, c0, r1, c1] = d.bbox.as_array();
                return Err(TileError::BoxOutsideTile {
                    index: t.index,
                    r0,
                    c0,
                    r1,
                    c1,
                    width: t.width,
                    height: t.height,
                });
            }
            out.push(d.translated(t.row0 as f64, t.col0 as f64));
        }
    }
    Ok(out)
}
