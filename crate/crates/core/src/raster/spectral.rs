//! Fourier localization: removal of long-wavelength terrain from a DEM.
//!
//! The DEM is mirror-extended to twice its size along both axes before the
//! transform. The extension is periodic without edge jumps, and since the
//! transfer functions are even in both frequency axes the filtered extension
//! keeps the mirror symmetry: cropping is exact and an ideal filter stays a
//! projection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Raster;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rolloff {
    /// Hard cutoff: wavelengths `<= lambda` pass untouched, longer ones vanish.
    Ideal,
    /// `1 - exp(-(k / k_lambda)^2)`, with `k_lambda = 2 pi / lambda`.
    Gaussian,
}

impl std::str::FromStr for Rolloff {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Rolloff::Ideal),
            "gaussian" => Ok(Rolloff::Gaussian),
            other => Err(Error::InvalidParameter(format!("unknown rolloff {other:?} (expected ideal|gaussian)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeParams {
    /// Cutoff wavelength in meters.
    pub lambda_m: f64,
    pub rolloff: Rolloff,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            lambda_m: 3.0,
            rolloff: Rolloff::Gaussian,
        }
    }
}

impl LocalizeParams {
    /// Gain applied to a sinusoid of the given wavelength.
    pub fn transfer(&self, wavelength_m: f64) -> f64 {
        self.transfer_ratio(self.lambda_m / wavelength_m)
    }

    /// Gain as a function of `k / k_lambda`.
    fn transfer_ratio(&self, ratio: f64) -> f64 {
        match self.rolloff {
            Rolloff::Ideal => {
                if ratio >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Rolloff::Gaussian => 1.0 - (-ratio * ratio).exp(),
        }
    }
}

/// Returns `dem - lowpass(dem)`, i.e. the DEM with wavelengths above
/// `lambda` suppressed. Nodata pixels are filled with the valid mean before
/// the transform and are zero (and still masked) in the output.
pub fn localize(dem: &Raster, params: &LocalizeParams) -> Result<Raster> {
    if !(params.lambda_m > 2.0 * dem.resolution) {
        return Err(Error::InvalidParameter(format!(
            "lambda {} m must exceed twice the resolution ({} m)",
            params.lambda_m,
            2.0 * dem.resolution
        )));
    }
    if dem.width < 4 || dem.height < 4 || dem.valid_count() < 16 {
        return Err(Error::InvalidParameter("localize needs at least 4x4 valid pixels".into()));
    }
    let fill = dem.valid_mean().expect("valid pixels present");
    let (w, h) = (dem.width, dem.height);
    let (ew, eh) = (2 * w, 2 * h);

    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); ew * eh];
    for er in 0..eh {
        let r = if er < h { er } else { 2 * h - 1 - er };
        let row = &mut buf[er * ew..(er + 1) * ew];
        for (ec, slot) in row.iter_mut().enumerate() {
            let c = if ec < w { ec } else { 2 * w - 1 - ec };
            let i = dem.index(c, r);
            let v = if dem.nodata[i] { fill } else { dem.values[i] };
            *slot = Complex::new(v, 0.0);
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    fft2(&mut planner, &mut buf, ew, eh, false);

    let fx = axis_frequencies(ew, dem.resolution);
    let fy = axis_frequencies(eh, dem.resolution);
    for (er, &f_row) in fy.iter().enumerate() {
        let row = &mut buf[er * ew..(er + 1) * ew];
        for (slot, &f_col) in row.iter_mut().zip(&fx) {
            let ratio = params.lambda_m * (f_col * f_col + f_row * f_row).sqrt();
            *slot *= params.transfer_ratio(ratio);
        }
    }

    fft2(&mut planner, &mut buf, ew, eh, true);
    let norm = 1.0 / (ew * eh) as f64;
    let mut values = Vec::with_capacity(w * h);
    for r in 0..h {
        values.extend(buf[r * ew..r * ew + w].iter().map(|c| c.re * norm));
    }
    drop(buf);

    let mut out = dem.with_values(values);
    // The filter zeroes the mean of the whole grid; with nodata present the
    // valid-pixel mean can still drift, so remove it explicitly.
    if let Some(mean) = out.valid_mean() {
        for (v, &m) in out.values.iter_mut().zip(&out.nodata) {
            *v = if m { 0.0 } else { *v - mean };
        }
    }
    Ok(out)
}

/// Signed frequencies in cycles per meter for an axis of `n` samples.
fn axis_frequencies(n: usize, resolution: f64) -> Vec<f64> {
    let span = n as f64 * resolution;
    (0..n)
        .map(|i| {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            k / span
        })
        .collect()
}

fn fft2(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    row_fft.process(buf);

    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    // Columns are processed in strips copied out to contiguous scratch.
    const STRIP: usize = 16;
    let mut scratch = vec![Complex::new(0.0, 0.0); h * STRIP];
    let mut c0 = 0;
    while c0 < w {
        let n = STRIP.min(w - c0);
        for r in 0..h {
            let src = &buf[r * w + c0..r * w + c0 + n];
            for (k, v) in src.iter().enumerate() {
                scratch[k * h + r] = *v;
            }
        }
        col_fft.process(&mut scratch[..n * h]);
        for r in 0..h {
            let dst = &mut buf[r * w + c0..r * w + c0 + n];
            for (k, v) in dst.iter_mut().enumerate() {
                *v = scratch[k * h + r];
            }
        }
        c0 += n;
    }
}
