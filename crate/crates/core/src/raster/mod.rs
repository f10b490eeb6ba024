//! Regular elevation grids: nearest-neighbor gridding, Fourier localization
//! and grayscale quantization.
//!
//! Rasters are north-up. `origin_x`/`origin_y` locate the *center* of pixel
//! `(col 0, row 0)`, the top-left pixel; `x` grows with the column and `y`
//! shrinks with the row.

mod grid;
mod io;
mod spectral;

pub use grid::grid_nearest;
pub use io::{read_raster, write_pgm, write_raster, RasterHeader, NODATA_SENTINEL};
pub use spectral::{localize, LocalizeParams, Rolloff};

use crate::error::{Error, Result};
use crate::geom::Point2;

/// Default grid spacing, matching the average LiDAR point spacing.
pub const DEFAULT_RESOLUTION: f64 = 0.3;
/// Default nearest-neighbor search radius.
pub const DEFAULT_MAX_SEARCH: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major values; entries under `nodata` are meaningless.
    pub values: Vec<f64>,
    pub nodata: Vec<bool>,
}

impl Raster {
    pub fn filled(origin_x: f64, origin_y: f64, resolution: f64, width: usize, height: usize, value: f64) -> Self {
        Self {
            origin_x,
            origin_y,
            resolution,
            width,
            height,
            values: vec![value; width * height],
            nodata: vec![false; width * height],
        }
    }

    /// Builds a fully valid raster from row-major values.
    pub fn from_values(origin_x: f64, origin_y: f64, resolution: f64, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: values.len(),
            });
        }
        if !(resolution > 0.0) {
            return Err(Error::InvalidParameter(format!("resolution must be positive, got {resolution}")));
        }
        Ok(Self {
            origin_x,
            origin_y,
            resolution,
            width,
            height,
            nodata: vec![false; values.len()],
            values,
        })
    }

    /// Same geometry, new values; the nodata mask is kept.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            values,
            ..self.clone()
        }
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.index(col, row)]
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        !self.nodata[self.index(col, row)]
    }

    /// World coordinates of a (possibly fractional) pixel position.
    #[inline]
    pub fn world(&self, col: f64, row: f64) -> Point2 {
        Point2::new(self.origin_x + col * self.resolution, self.origin_y - row * self.resolution)
    }

    /// Fractional pixel position `(col, row)` of a world point.
    #[inline]
    pub fn pixel(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.origin_x) / self.resolution, (self.origin_y - p.y) / self.resolution)
    }

    pub fn valid_count(&self) -> usize {
        self.nodata.iter().filter(|&&m| !m).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.nodata).filter(|(_, &m)| !m).map(|(&v, _)| v)
    }

    /// `(min, max)` over valid pixels.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn valid_mean(&self) -> Option<f64> {
        let (sum, n) = self.valid_values().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Bilinear sample at a fractional pixel position. Positions outside the
    /// grid are clamped to the edge.
    pub fn sample_bilinear(&self, col: f64, row: f64) -> f64 {
        let max_c = (self.width - 1) as f64;
        let max_r = (self.height - 1) as f64;
        let c = col.clamp(0.0, max_c);
        let r = row.clamp(0.0, max_r);
        let c0 = c.floor() as usize;
        let r0 = r.floor() as usize;
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let fc = c - c0 as f64;
        let fr = r - r0 as f64;
        let top = if fc == 0.0 { self.get(c0, r0) } else { self.get(c0, r0) * (1.0 - fc) + self.get(c1, r0) * fc };
        let bottom = if fc == 0.0 { self.get(c0, r1) } else { self.get(c0, r1) * (1.0 - fc) + self.get(c1, r1) * fc };
        if fr == 0.0 {
            top
        } else {
            top * (1.0 - fr) + bottom * fr
        }
    }
}

/// Affine map of valid pixels onto the integer levels `0..=255` with
/// round-half-up; the minimum maps to 0 and the maximum to 255.
pub fn to_grayscale(dem: &Raster) -> Result<Raster> {
    let (lo, hi) = dem
        .value_range()
        .ok_or_else(|| Error::Empty("raster has no valid pixels".into()))?;
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::InvalidParameter("zero value range; cannot quantize a constant raster".into()));
    }
    let values = dem
        .values
        .iter()
        .zip(&dem.nodata)
        .map(|(&v, &m)| if m { 0.0 } else { gray_level(v, lo, range) })
        .collect();
    Ok(dem.with_values(values))
}

#[inline]
fn gray_level(v: f64, lo: f64, range: f64) -> f64 {
    ((v - lo) / range * 255.0 + 0.5).floor().clamp(0.0, 255.0)
}

/// Elevation corresponding to a grayscale level for a raster whose valid
/// values span `[lo, hi]`.
pub fn gray_to_value(level: u8, lo: f64, hi: f64) -> f64 {
    match level {
        0 => lo,
        255 => hi,
        l => lo + (hi - lo) * f64::from(l) / 255.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_round_half_up() {
        let r = Raster::from_values(0.0, 0.0, 1.0, 3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(to_grayscale(&r).unwrap().values, vec![0.0, 128.0, 255.0]);
    }

    #[test]
    fn grayscale_rejects_constant() {
        let r = Raster::filled(0.0, 0.0, 1.0, 4, 4, 7.0);
        assert!(matches!(to_grayscale(&r), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn grayscale_ignores_nodata() {
        let mut r = Raster::from_values(0.0, 0.0, 1.0, 3, 1, vec![-100.0, 0.0, 2.0]).unwrap();
        r.nodata[0] = true;
        let g = to_grayscale(&r).unwrap();
        assert_eq!(&g.values[1..], &[0.0, 255.0]);
        assert!(g.nodata[0]);
    }

    #[test]
    fn gray_levels_map_back() {
        assert_eq!(gray_to_value(0, -1.0, 3.0), -1.0);
        assert_eq!(gray_to_value(255, -1.0, 3.0), 3.0);
        assert!((gray_to_value(51, 0.0, 1.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bilinear_hits_pixel_centers() {
        let r = Raster::from_values(0.0, 0.0, 1.0, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.sample_bilinear(0.0, 0.0), 0.0);
        assert_eq!(r.sample_bilinear(1.0, 1.0), 3.0);
        assert_eq!(r.sample_bilinear(0.5, 0.5), 1.5);
        assert_eq!(r.sample_bilinear(-4.0, 9.0), 2.0);
    }

    #[test]
    fn world_pixel_roundtrip() {
        let r = Raster::filled(10.0, 50.0, 0.5, 4, 4, 0.0);
        let p = r.world(2.0, 3.0);
        assert_eq!(p, Point2::new(11.0, 48.5));
        assert_eq!(r.pixel(p), (2.0, 3.0));
    }
}
