//! Coordinate frames, north-up affine georeferencing and GSD arithmetic.
//!
//! Transforms follow the world-file convention: the origin is the world
//! coordinate of the *center* of pixel (0, 0), columns grow east and rows grow
//! south (`pixel_size_y < 0`). Rotation terms are not supported.

use std::fmt;

use thiserror::Error;

/// Relative tolerance used when comparing pixel sizes and GSDs.
pub const GSD_REL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("pixel_size_x must be finite and > 0, got {0}")]
    InvalidPixelSizeX(f64),
    #[error("pixel_size_y must be finite and < 0 (north-up), got {0}")]
    InvalidPixelSizeY(f64),
    #[error("origin must be finite, got ({0}, {1})")]
    InvalidOrigin(f64, f64),
    #[error("GSD must be finite and > 0, got {0}")]
    InvalidGsd(f64),
    #[error("{name} must be finite and > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("metric quantity requested on a geographic (degree) transform")]
    NotProjected,
    #[error("world file must have 6 numeric lines, found {0}")]
    WorldFileLineCount(usize),
    #[error("world file line {line}: cannot parse {text:?} as a number")]
    WorldFileNumber { line: usize, text: String },
    #[error("unsupported rotation: world file rotation terms must be 0, got ({0}, {1})")]
    UnsupportedRotation(f64, f64),
}

/// Fractional pixel position; integers address pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelCoord {
    pub row: f64,
    pub col: f64,
}

impl PixelCoord {
    pub const fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }
}

/// Position in the transform's world frame (easting/northing in meters for a
/// projected frame, lon/lat in degrees for a geographic one).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldCoord {
    pub x: f64,
    pub y: f64,
}

impl WorldCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &WorldCoord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrsKind {
    /// Local or projected frame in meters.
    #[default]
    Projected,
    /// Longitude/latitude in degrees; carried through but not used for metric math.
    Geographic,
}

/// Ground sampling distance in meters per pixel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Gsd(f64);

impl Gsd {
    pub fn new(meters_per_pixel: f64) -> Result<Self, GeoError> {
        if meters_per_pixel.is_finite() && meters_per_pixel > 0.0 {
            Ok(Self(meters_per_pixel))
        } else {
            Err(GeoError::InvalidGsd(meters_per_pixel))
        }
    }

    pub fn meters(self) -> f64 {
        self.0
    }

    /// Equal within [`GSD_REL_TOLERANCE`].
    pub fn approx_eq(self, other: Gsd) -> bool {
        (self.0 - other.0).abs() <= GSD_REL_TOLERANCE * self.0.max(other.0)
    }

    /// Megapixels needed to cover one square kilometer at this GSD.
    pub fn megapixels_per_km2(self) -> f64 {
        // 1 km² = 10^6 m², one pixel covers gsd² m², 10^6 px per MP.
        let inv = 1.0 / self.0;
        inv * inv
    }
}

impl fmt::Display for Gsd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} m/px", self.0)
    }
}

/// Rotation-free north-up affine transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    origin_x: f64,
    origin_y: f64,
    pixel_size_x: f64,
    pixel_size_y: f64,
    crs: CrsKind,
}

impl GeoTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size_x: f64,
        pixel_size_y: f64,
    ) -> Result<Self, GeoError> {
        if !(origin_x.is_finite() && origin_y.is_finite()) {
            return Err(GeoError::InvalidOrigin(origin_x, origin_y));
        }
        if !(pixel_size_x.is_finite() && pixel_size_x > 0.0) {
            return Err(GeoError::InvalidPixelSizeX(pixel_size_x));
        }
        if !(pixel_size_y.is_finite() && pixel_size_y < 0.0) {
            return Err(GeoError::InvalidPixelSizeY(pixel_size_y));
        }
        Ok(Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            crs: CrsKind::Projected,
        })
    }

    /// Square-pixel north-up transform with the given pixel-(0,0) center.
    pub fn north_up(origin: WorldCoord, gsd: Gsd) -> Self {
        Self {
            origin_x: origin.x,
            origin_y: origin.y,
            pixel_size_x: gsd.meters(),
            pixel_size_y: -gsd.meters(),
            crs: CrsKind::Projected,
        }
    }

    /// Origin (0,0), unit pixels, y pointing north.
    pub fn identity() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: -1.0,
            crs: CrsKind::Projected,
        }
    }

    pub fn with_crs(mut self, crs: CrsKind) -> Self {
        self.crs = crs;
        self
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }
    pub fn origin_y(&self) -> f64 {
        self.origin_y
    }
    pub fn pixel_size_x(&self) -> f64 {
        self.pixel_size_x
    }
    pub fn pixel_size_y(&self) -> f64 {
        self.pixel_size_y
    }
    pub fn crs(&self) -> CrsKind {
        self.crs
    }

    pub fn pixel_to_world(&self, px: PixelCoord) -> WorldCoord {
        WorldCoord {
            x: self.origin_x + px.col * self.pixel_size_x,
            y: self.origin_y + px.row * self.pixel_size_y,
        }
    }

    pub fn world_to_pixel(&self, w: WorldCoord) -> PixelCoord {
        PixelCoord {
            row: (w.y - self.origin_y) / self.pixel_size_y,
            col: (w.x - self.origin_x) / self.pixel_size_x,
        }
    }

    /// GSD of the transform. Requires a projected frame and square pixels.
    pub fn gsd(&self) -> Result<Gsd, GeoError> {
        if self.crs == CrsKind::Geographic {
            return Err(GeoError::NotProjected);
        }
        Gsd::new(self.pixel_size_x)
    }

    pub fn has_square_pixels(&self) -> bool {
        let (a, b) = (self.pixel_size_x, -self.pixel_size_y);
        (a - b).abs() <= GSD_REL_TOLERANCE * a.max(b)
    }

    /// Transform of a sub-window whose pixel (0,0) is `(row0, col0)` here.
    pub fn shifted(&self, row0: f64, col0: f64) -> Self {
        let o = self.pixel_to_world(PixelCoord::new(row0, col0));
        Self {
            origin_x: o.x,
            origin_y: o.y,
            ..*self
        }
    }

    /// World coordinate of the outer top-left corner of pixel (0,0).
    pub fn top_left_corner(&self) -> WorldCoord {
        self.pixel_to_world(PixelCoord::new(-0.5, -0.5))
    }
}

/// Parses the six-line ESRI world file: `pixel_size_x, rot_y, rot_x,
/// pixel_size_y, origin_x, origin_y`.
pub fn parse_world_file(text: &str) -> Result<GeoTransform, GeoError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.len() != 6 {
        return Err(GeoError::WorldFileLineCount(lines.len()));
    }
    let mut v = [0.0f64; 6];
    for (slot, (line, text)) in v.iter_mut().zip(&lines) {
        *slot = text.parse::<f64>().map_err(|_| GeoError::WorldFileNumber {
            line: *line,
            text: text.to_string(),
        })?;
        if !slot.is_finite() {
            return Err(GeoError::WorldFileNumber {
                line: *line,
                text: text.to_string(),
            });
        }
    }
    if v[1] != 0.0 || v[2] != 0.0 {
        return Err(GeoError::UnsupportedRotation(v[1], v[2]));
    }
    GeoTransform::new(v[4], v[5], v[0], v[3])
}

/// Emits the six-line world file. Each value is written in the shortest
/// decimal form that parses back to the identical `f64`.
pub fn format_world_file(t: &GeoTransform) -> String {
    format!(
        "{}\n0\n0\n{}\n{}\n{}\n",
        t.pixel_size_x, t.pixel_size_y, t.origin_x, t.origin_y
    )
}

/// Flight parameters of an acquisition run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSpec {
    altitude_m: f64,
    ground_speed_mps: f64,
    swath_width_m: f64,
    frame_rate_hz: f64,
}

impl CoverageSpec {
    pub fn new(
        altitude_m: f64,
        ground_speed_mps: f64,
        swath_width_m: f64,
        frame_rate_hz: f64,
    ) -> Result<Self, GeoError> {
        for (name, value) in [
            ("altitude_m", altitude_m),
            ("ground_speed_mps", ground_speed_mps),
            ("swath_width_m", swath_width_m),
            ("frame_rate_hz", frame_rate_hz),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeoError::NonPositive { name, value });
            }
        }
        Ok(Self {
            altitude_m,
            ground_speed_mps,
            swath_width_m,
            frame_rate_hz,
        })
    }

    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }
    pub fn ground_speed_mps(&self) -> f64 {
        self.ground_speed_mps
    }
    pub fn swath_width_m(&self) -> f64 {
        self.swath_width_m
    }
    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    /// Along-track ground distance between consecutive frames.
    pub fn frame_spacing_m(&self) -> f64 {
        self.ground_speed_mps / self.frame_rate_hz
    }
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Ground area imaged per second, m²/s.
pub fn coverage_rate(spec: &CoverageSpec) -> f64 {
    spec.ground_speed_mps * spec.swath_width_m
}

/// Processing seconds per km² given seconds per megapixel at a GSD.
pub fn time_per_km2(seconds_per_megapixel: f64, gsd: Gsd) -> Result<f64, GeoError> {
    if !(seconds_per_megapixel.is_finite() && seconds_per_megapixel > 0.0) {
        return Err(GeoError::NonPositive {
            name: "seconds_per_megapixel",
            value: seconds_per_megapixel,
        });
    }
    Ok(seconds_per_megapixel * gsd.megapixels_per_km2())
}

/// A computed per-area time set against an externally reported figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputCheck {
    pub seconds_per_megapixel: f64,
    pub gsd_m: f64,
    pub computed_s_per_km2: f64,
    pub reported_s_per_km2: f64,
}

impl ThroughputCheck {
    pub fn new(
        seconds_per_megapixel: f64,
        gsd: Gsd,
        reported_s_per_km2: f64,
    ) -> Result<Self, GeoError> {
        Ok(Self {
            seconds_per_megapixel,
            gsd_m: gsd.meters(),
            computed_s_per_km2: time_per_km2(seconds_per_megapixel, gsd)?,
            reported_s_per_km2,
        })
    }

    /// `(reported - computed) / computed`.
    pub fn relative_gap(&self) -> f64 {
        (self.reported_s_per_km2 - self.computed_s_per_km2) / self.computed_s_per_km2
    }

    pub fn agrees_within(&self, rel_tol: f64) -> bool {
        self.relative_gap().abs() <= rel_tol
    }

    /// One tab-separated line: inputs, computed, reported, gap, verdict.
    pub fn report_line(&self, rel_tol: f64) -> String {
        format!(
            "s_per_mp={}\tgsd_m={}\tcomputed_s_per_km2={:.3}\treported_s_per_km2={:.3}\tgap={:+.2}%\t{}",
            self.seconds_per_megapixel,
            self.gsd_m,
            self.computed_s_per_km2,
            self.reported_s_per_km2,
            100.0 * self.relative_gap(),
            if self.agrees_within(rel_tol) {
                "consistent"
            } else {
                "DISCREPANCY"
            }
        )
    }
}
