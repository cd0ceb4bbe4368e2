//! Downsampling to a target GSD.
//!
//! The output keeps the source's outer top-left corner fixed in world space.
//! Output pixel `j` along an axis covers source interval `[j·f, (j+1)·f)` with
//! `f = target / source`, clipped to the source extent.

use super::{GeoRaster, Grid, RasterError, Sample};
use crate::geocore::{GeoTransform, Gsd, WorldCoord};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMethod {
    /// Source pixel containing the output pixel's center.
    Nearest,
    /// Footprint-area-weighted mean of the covered source pixels.
    #[default]
    BoxAverage,
}

/// `(source index, weight)` pairs for one output index along one axis.
fn axis_weights(src_len: usize, out_len: usize, factor: f64) -> Vec<Vec<(usize, f64)>> {
    (0..out_len)
        .map(|j| {
            let lo = j as f64 * factor;
            let hi = ((j + 1) as f64 * factor).min(src_len as f64);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src_len);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

fn nearest_index(j: usize, factor: f64, src_len: usize) -> usize {
    (((j as f64 + 0.5) * factor).floor() as usize).min(src_len - 1)
}

pub fn resample_to_gsd<T: Sample>(
    raster: &GeoRaster<T>,
    target: Gsd,
    method: ResampleMethod,
) -> Result<GeoRaster<T>, RasterError> {
    let source = raster.gsd()?;
    if target.approx_eq(source) {
        return Ok(raster.clone());
    }
    if target < source {
        return Err(RasterError::Upsampling {
            target: target.meters(),
            source_gsd: source.meters(),
        });
    }
    let factor = target.meters() / source.meters();
    let (src_w, src_h, ch) = (raster.width(), raster.height(), raster.channels());
    let out_w = ((src_w as f64 / factor).round() as usize).max(1);
    let out_h = ((src_h as f64 / factor).round() as usize).max(1);

    let corner = raster.transform().top_left_corner();
    let half = 0.5 * target.meters();
    let transform = GeoTransform::north_up(WorldCoord::new(corner.x + half, corner.y - half), target)
        .with_crs(raster.transform().crs());

    let src = raster.grid();
    let mut out = vec![T::default(); out_w * out_h * ch];
    match method {
        ResampleMethod::Nearest => {
            let cols: Vec<usize> = (0..out_w).map(|j| nearest_index(j, factor, src_w)).collect();
            par::for_each_chunk_mut(&mut out, out_w * ch, |r, row| {
                let sr = nearest_index(r, factor, src_h);
                for (j, &sc) in cols.iter().enumerate() {
                    for c in 0..ch {
                        row[j * ch + c] = src.get(sr, sc, c);
                    }
                }
            });
        }
        ResampleMethod::BoxAverage => {
            let wx = axis_weights(src_w, out_w, factor);
            let wy = axis_weights(src_h, out_h, factor);
            par::for_each_chunk_mut(&mut out, out_w * ch, |r, row| {
                let mut acc = vec![0.0f64; ch];
                for (j, xs) in wx.iter().enumerate() {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    let mut total = 0.0;
                    for &(sr, wr) in &wy[r] {
                        for &(sc, wc) in xs {
                            let w = wr * wc;
                            total += w;
                            for (c, a) in acc.iter_mut().enumerate() {
                                *a += w * src.get(sr, sc, c).to_f64();
                            }
                        }
                    }
                    for (c, a) in acc.iter().enumerate() {
                        row[j * ch + c] = T::from_f64(a / total);
                    }
                }
            });
        }
    }
    GeoRaster::new(Grid::new(out_w, out_h, ch, out)?, transform)
}
