//! Pixel grids, georeferenced rasters and binary masks.

mod io;
mod resample;

pub use io::{
    read_georaster, read_grid_u8, read_probability_grid, read_probability_map, sidecar_path_for,
    write_georaster, write_grid_u8, write_probability_grid, write_probability_map, ImageFormat,
};
pub use resample::{resample_to_gsd, ResampleMethod};

use std::path::PathBuf;

use thiserror::Error;

use crate::geocore::{GeoError, GeoTransform, Gsd};

/// Hard cap on samples per raster (width·height·channels).
pub const MAX_SAMPLES: usize = 1 << 31;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be non-zero, got {width}x{height}x{channels}")]
    ZeroSize {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("raster size {width}x{height}x{channels} overflows the sample limit")]
    SizeOverflow {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("data length {actual} does not match {width}x{height}x{channels}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },
    #[error("non-square pixels: |pixel_size_x|={0} but |pixel_size_y|={1}")]
    NonSquarePixels(f64, f64),
    #[error("mask sample {value} at index {index} is not 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("grids differ: {0}x{1} vs {2}x{3}")]
    GridMismatch(usize, usize, usize, usize),
    #[error("cannot upsample: target GSD {target} m is finer than source {source_gsd} m")]
    Upsampling { target: f64, source_gsd: f64 },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing world-file sidecar")]
    MissingSidecar { path: PathBuf },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: world file: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: GeoError,
    },
}

/// Pixel sample types: 8-bit imagery/masks and unit-interval probabilities.
pub trait Sample: Copy + Send + Sync + PartialEq + Default + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Sample for u8 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v.round().clamp(0.0, 255.0) as u8
    }
}

impl Sample for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

/// Row-major, channel-interleaved pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

fn checked_len(width: usize, height: usize, channels: usize) -> Result<usize, RasterError> {
    if width == 0 || height == 0 || channels == 0 {
        return Err(RasterError::ZeroSize {
            width,
            height,
            channels,
        });
    }
    if channels != 1 && channels != 3 {
        return Err(RasterError::Channels(channels));
    }
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= MAX_SAMPLES)
        .ok_or(RasterError::SizeOverflow {
            width,
            height,
            channels,
        })
}

impl<T: Sample> Grid<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self, RasterError> {
        let len = checked_len(width, height, channels)?;
        if data.len() != len {
            return Err(RasterError::DataLength {
                width,
                height,
                channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self, RasterError> {
        let len = checked_len(width, height, channels)?;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![value; len],
        })
    }

    /// Single-channel grid from a per-pixel function.
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> T,
    ) -> Result<Self, RasterError> {
        let len = checked_len(width, height, 1)?;
        let mut data = Vec::with_capacity(len);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Ok(Self {
            width,
            height,
            channels: 1,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }
    pub fn row_len(&self) -> usize {
        self.width * self.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: T) {
        let i = (row * self.width + col) * self.channels + channel;
        self.data[i] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        let n = self.row_len();
        &self.data[row * n..(row + 1) * n]
    }

    /// Copies the window `[row0, row0+height) x [col0, col0+width)`, clipped to the grid.
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<Self, RasterError> {
        let h = height.min(self.height.saturating_sub(row0));
        let w = width.min(self.width.saturating_sub(col0));
        let len = checked_len(w, h, self.channels)?;
        let mut data = Vec::with_capacity(len);
        for r in row0..row0 + h {
            let start = (r * self.width + col0) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Self {
            width: w,
            height: h,
            channels: self.channels,
            data,
        })
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// A grid with an attached north-up transform and square pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRaster<T> {
    grid: Grid<T>,
    transform: GeoTransform,
}

pub type ImageRaster = GeoRaster<u8>;
pub type ProbabilityMap = GeoRaster<f32>;

impl<T: Sample> GeoRaster<T> {
    pub fn new(grid: Grid<T>, transform: GeoTransform) -> Result<Self, RasterError> {
        if !transform.has_square_pixels() {
            return Err(RasterError::NonSquarePixels(
                transform.pixel_size_x(),
                -transform.pixel_size_y(),
            ));
        }
        Ok(Self { grid, transform })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }
    pub fn into_grid(self) -> Grid<T> {
        self.grid
    }
    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }
    pub fn width(&self) -> usize {
        self.grid.width
    }
    pub fn height(&self) -> usize {
        self.grid.height
    }
    pub fn channels(&self) -> usize {
        self.grid.channels
    }

    pub fn gsd(&self) -> Result<Gsd, GeoError> {
        self.transform.gsd()
    }
}

/// Single-channel raster whose samples are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(GeoRaster<u8>);

impl BinaryMask {
    pub fn new(raster: GeoRaster<u8>) -> Result<Self, RasterError> {
        if raster.channels() != 1 {
            return Err(RasterError::Channels(raster.channels()));
        }
        if let Some((index, &value)) = raster.grid.data.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(RasterError::NotBinary { index, value });
        }
        Ok(Self(raster))
    }

    /// Maps any non-zero sample to 1.
    pub fn from_nonzero(raster: GeoRaster<u8>) -> Result<Self, RasterError> {
        if raster.channels() != 1 {
            return Err(RasterError::Channels(raster.channels()));
        }
        let GeoRaster { mut grid, transform } = raster;
        for v in grid.data_mut() {
            *v = u8::from(*v != 0);
        }
        Ok(Self(GeoRaster { grid, transform }))
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        transform: GeoTransform,
        f: impl Fn(usize, usize) -> bool,
    ) -> Result<Self, RasterError> {
        let grid = Grid::from_fn(width, height, |r, c| u8::from(f(r, c)))?;
        Ok(Self(GeoRaster::new(grid, transform)?))
    }

    pub fn empty(width: usize, height: usize, transform: GeoTransform) -> Result<Self, RasterError> {
        Self::from_fn(width, height, transform, |_, _| false)
    }

    /// Foreground where `probability > threshold`.
    pub fn from_probability(map: &ProbabilityMap, threshold: f32) -> Result<Self, RasterError> {
        let g = map.grid();
        if g.channels() != 1 {
            return Err(RasterError::Channels(g.channels()));
        }
        let data = g.data().iter().map(|&p| u8::from(p > threshold)).collect();
        let grid = Grid::new(g.width(), g.height(), 1, data)?;
        Ok(Self(GeoRaster::new(grid, *map.transform())?))
    }

    pub fn raster(&self) -> &GeoRaster<u8> {
        &self.0
    }
    pub fn into_raster(self) -> GeoRaster<u8> {
        self.0
    }
    pub fn width(&self) -> usize {
        self.0.width()
    }
    pub fn height(&self) -> usize {
        self.0.height()
    }
    pub fn transform(&self) -> &GeoTransform {
        self.0.transform()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0.grid.data[row * self.0.grid.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let w = self.0.grid.width;
        self.0.grid.data[row * w + col] = u8::from(value);
    }

    /// Out-of-bounds positions read as background.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height()
            && (col as usize) < self.width()
            && self.get(row as usize, col as usize)
    }

    pub fn count_ones(&self) -> usize {
        self.0.grid.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.0
            .grid
            .data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn same_grid(&self, other: &BinaryMask) -> bool {
        self.width() == other.width() && self.height() == other.height()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_grid(other)
            && self
                .0
                .grid
                .data
                .iter()
                .zip(&other.0.grid.data)
                .all(|(a, b)| *a <= *b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(matches!(
            Grid::<u8>::new(0, 2, 1, vec![]),
            Err(RasterError::ZeroSize { .. })
        ));
        assert!(matches!(
            Grid::<u8>::new(2, 2, 2, vec![0; 8]),
            Err(RasterError::Channels(2))
        ));
        assert!(matches!(
            Grid::<u8>::new(2, 2, 1, vec![0; 3]),
            Err(RasterError::DataLength { .. })
        ));
        assert!(matches!(
            Grid::<u8>::filled(usize::MAX / 2, 4, 1, 0),
            Err(RasterError::SizeOverflow { .. })
        ));
    }

    #[test]
    fn crop_clips_at_edges() {
        let g = Grid::from_fn(5, 4, |r, c| (r * 10 + c) as u8).unwrap();
        let c = g.crop(2, 3, 10, 10).unwrap();
        assert_eq!((c.width(), c.height()), (2, 2));
        assert_eq!(c.data(), &[23, 24, 33, 34]);
    }

    #[test]
    fn mask_validates_domain() {
        let grid = Grid::new(2, 1, 1, vec![0u8, 2]).unwrap();
        let r = GeoRaster::new(grid, GeoTransform::identity()).unwrap();
        assert!(matches!(
            BinaryMask::new(r.clone()),
            Err(RasterError::NotBinary { index: 1, value: 2 })
        ));
        let m = BinaryMask::from_nonzero(r).unwrap();
        assert_eq!(m.count_ones(), 1);
    }

    #[test]
    fn non_square_pixels_rejected() {
        let grid = Grid::filled(2, 2, 1, 0u8).unwrap();
        let t = GeoTransform::new(0.0, 0.0, 0.5, -0.25).unwrap();
        assert!(matches!(
            GeoRaster::new(grid, t),
            Err(RasterError::NonSquarePixels(..))
        ));
    }
}
