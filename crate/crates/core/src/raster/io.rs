//! Raster file I/O: binary/ASCII PNM (PGM/PPM), PFM float maps, 8-bit PNG,
//! plus the world-file sidecar.
//!
//! PFM files are always written little-endian (negative scale). PFM stores
//! rows bottom-to-top; grids in memory are top-to-bottom.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{GeoRaster, Grid, RasterError};
use crate::geocore::{format_world_file, parse_world_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pnm,
    Png,
    Pfm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "ppm" | "pnm" => Some(Self::Pnm),
            "png" => Some(Self::Png),
            "pfm" => Some(Self::Pfm),
            _ => None,
        }
    }
}

/// Conventional sidecar location: the image path with a `.wld` extension.
pub fn sidecar_path_for(image_path: &Path) -> PathBuf {
    image_path.with_extension("wld")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> RasterError {
    RasterError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn detect(path: &Path, bytes: &[u8]) -> Result<ImageFormat, RasterError> {
    match bytes {
        [b'P', b'2' | b'3' | b'5' | b'6', ..] => Ok(ImageFormat::Pnm),
        [b'P', b'f' | b'F', ..] => Ok(ImageFormat::Pfm),
        [0x89, b'P', b'N', b'G', ..] => Ok(ImageFormat::Png),
        _ => Err(format_err(path, "unrecognized image format")),
    }
}

/// Reads an 8-bit grid (PGM/PPM/PNG).
pub fn read_grid_u8(path: &Path) -> Result<Grid<u8>, RasterError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match detect(path, &bytes)? {
        ImageFormat::Pnm => decode_pnm(path, &bytes),
        ImageFormat::Png => decode_png(path, &bytes),
        ImageFormat::Pfm => Err(format_err(path, "PFM holds floats; expected an 8-bit image")),
    }
}

/// Reads a probability grid: PFM samples verbatim, 8-bit formats scaled by 1/255.
pub fn read_probability_grid(path: &Path) -> Result<Grid<f32>, RasterError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match detect(path, &bytes)? {
        ImageFormat::Pfm => decode_pfm(path, &bytes),
        ImageFormat::Pnm | ImageFormat::Png => {
            let g = if bytes[0] == b'P' {
                decode_pnm(path, &bytes)?
            } else {
                decode_png(path, &bytes)?
            };
            let (w, h, c) = (g.width(), g.height(), g.channels());
            let data = g.into_data().into_iter().map(|v| v as f32 / 255.0).collect();
            Grid::new(w, h, c, data)
        }
    }
}

/// Writes an 8-bit grid; format chosen by extension (`.png`, else PNM).
pub fn write_grid_u8(path: &Path, grid: &Grid<u8>) -> Result<(), RasterError> {
    let bytes = match ImageFormat::from_path(path) {
        Some(ImageFormat::Png) => encode_png(path, grid)?,
        Some(ImageFormat::Pfm) => {
            return Err(format_err(path, "cannot write 8-bit samples as PFM"));
        }
        _ => encode_pnm(grid),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes a probability grid as PFM, or quantized to 8 bits for `.pgm`/`.png`.
pub fn write_probability_grid(path: &Path, grid: &Grid<f32>) -> Result<(), RasterError> {
    match ImageFormat::from_path(path) {
        Some(ImageFormat::Pnm) | Some(ImageFormat::Png) => {
            let data = grid
                .data()
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            let g = Grid::new(grid.width(), grid.height(), grid.channels(), data)?;
            write_grid_u8(path, &g)
        }
        _ => fs::write(path, encode_pfm(grid)).map_err(io_err(path)),
    }
}

fn read_sidecar(sidecar_path: &Path) -> Result<crate::geocore::GeoTransform, RasterError> {
    let text = match fs::read_to_string(sidecar_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(RasterError::MissingSidecar {
                path: sidecar_path.to_path_buf(),
            })
        }
        Err(e) => return Err(io_err(sidecar_path)(e)),
    };
    parse_world_file(&text).map_err(|source| RasterError::Sidecar {
        path: sidecar_path.to_path_buf(),
        source,
    })
}

fn write_sidecar(sidecar_path: &Path, t: &crate::geocore::GeoTransform) -> Result<(), RasterError> {
    fs::write(sidecar_path, format_world_file(t)).map_err(io_err(sidecar_path))
}

pub fn read_georaster(image_path: &Path, sidecar_path: &Path) -> Result<GeoRaster<u8>, RasterError> {
    let transform = read_sidecar(sidecar_path)?;
    let grid = read_grid_u8(image_path)?;
    GeoRaster::new(grid, transform)
}

pub fn write_georaster(
    raster: &GeoRaster<u8>,
    image_path: &Path,
    sidecar_path: &Path,
) -> Result<(), RasterError> {
    write_grid_u8(image_path, raster.grid())?;
    write_sidecar(sidecar_path, raster.transform())
}

pub fn read_probability_map(
    image_path: &Path,
    sidecar_path: &Path,
) -> Result<GeoRaster<f32>, RasterError> {
    let transform = read_sidecar(sidecar_path)?;
    let grid = read_probability_grid(image_path)?;
    GeoRaster::new(grid, transform)
}

pub fn write_probability_map(
    raster: &GeoRaster<f32>,
    image_path: &Path,
    sidecar_path: &Path,
) -> Result<(), RasterError> {
    write_probability_grid(image_path, raster.grid())?;
    write_sidecar(sidecar_path, raster.transform())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number<T: std::str::FromStr>(&mut self) -> Option<T> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<Grid<u8>, RasterError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token().ok_or_else(|| format_err(path, "empty file"))?;
    let (channels, binary) = match magic {
        b"P2" => (1, false),
        b"P3" => (3, false),
        b"P5" => (1, true),
        b"P6" => (3, true),
        _ => return Err(format_err(path, "unsupported PNM variant")),
    };
    let width: usize = cur.number().ok_or_else(|| format_err(path, "bad width"))?;
    let height: usize = cur.number().ok_or_else(|| format_err(path, "bad height"))?;
    let maxval: u32 = cur.number().ok_or_else(|| format_err(path, "bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(path, format!("unsupported maxval {maxval} (8-bit only)")));
    }
    let len = super::checked_len(width, height, channels)?;
    let data = if binary {
        // exactly one whitespace byte separates the header from the samples
        let start = cur.pos + 1;
        let end = start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| format_err(path, "truncated sample data"))?;
        bytes[start..end].to_vec()
    } else {
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            let s: u32 = cur
                .number()
                .ok_or_else(|| format_err(path, "truncated sample data"))?;
            if s > maxval {
                return Err(format_err(path, format!("sample {s} exceeds maxval")));
            }
            v.push(s as u8);
        }
        v
    };
    Grid::new(width, height, channels, data)
}

fn encode_pnm(grid: &Grid<u8>) -> Vec<u8> {
    let magic = if grid.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend_from_slice(grid.data());
    out
}

fn decode_pfm(path: &Path, bytes: &[u8]) -> Result<Grid<f32>, RasterError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let channels = match cur.token() {
        Some(b"Pf") => 1,
        Some(b"PF") => 3,
        _ => return Err(format_err(path, "bad PFM magic")),
    };
    let width: usize = cur.number().ok_or_else(|| format_err(path, "bad width"))?;
    let height: usize = cur.number().ok_or_else(|| format_err(path, "bad height"))?;
    let scale: f64 = cur.number().ok_or_else(|| format_err(path, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, "PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let len = super::checked_len(width, height, channels)?;
    let start = cur.pos + 1;
    let end = len
        .checked_mul(4)
        .and_then(|n| n.checked_add(start))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| format_err(path, "truncated sample data"))?;
    let raw = &bytes[start..end];
    let row_len = width * channels;
    let mut data = vec![0f32; len];
    for (file_row, chunk) in raw.chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let arr = [b[0], b[1], b[2], b[3]];
            data[row * row_len + i] = if little {
                f32::from_le_bytes(arr)
            } else {
                f32::from_be_bytes(arr)
            };
        }
    }
    Grid::new(width, height, channels, data)
}

fn encode_pfm(grid: &Grid<f32>) -> Vec<u8> {
    let magic = if grid.channels() == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", grid.width(), grid.height()).into_bytes();
    out.reserve(grid.data().len() * 4);
    for row in (0..grid.height()).rev() {
        for v in grid.row(row) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Grid<u8>, RasterError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale => buf,
        png::ColorType::Rgb => buf,
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Indexed => return Err(format_err(path, "indexed PNG not expanded")),
    };
    let channels = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        _ => 3,
    };
    Grid::new(w, h, channels, data)
}

fn encode_png(path: &Path, grid: &Grid<u8>) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let w = BufWriter::new(&mut out);
        let mut enc = png::Encoder::new(w, grid.width() as u32, grid.height() as u32);
        enc.set_color(if grid.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| format_err(path, e.to_string()))?;
        writer
            .write_image_data(grid.data())
            .map_err(|e| format_err(path, e.to_string()))?;
        writer.finish().map_err(|e| format_err(path, e.to_string()))?;
    }
    Ok(out)
}
