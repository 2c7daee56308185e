//! Ramp-filtered back-projection for half-turn parallel-beam sinograms.
//!
//! Sinogram rows follow the projection convention: at angle `θ` the detector
//! coordinate of slice point `(x, y)` is `x·cos θ − y·sin θ`, measured in
//! detector pixels from the central column.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{QuoptError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Filter {
    #[default]
    Ramp,
    SheppLogan,
    Hann,
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Filter::Ramp => "ramp",
            Filter::SheppLogan => "shepp-logan",
            Filter::Hann => "hann",
        })
    }
}

impl FromStr for Filter {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(Filter::Ramp),
            "shepp-logan" => Ok(Filter::SheppLogan),
            "hann" => Ok(Filter::Hann),
            _ => Err(QuoptError::InvalidParameter(format!("unknown filter '{s}'"))),
        }
    }
}

/// Frequency response of the filter for padded length `len`.
///
/// The ramp is the transform of the band-limited spatial kernel
/// (`1/4` at 0, `−1/(πn)²` at odd `n`), which avoids the DC offset of a
/// sampled `|f|`.
pub fn filter_response(filter: Filter, len: usize) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for n in (1..len / 2).step_by(2) {
        let v = -1.0 / (PI * n as f64).powi(2);
        kernel[n].re = v;
        kernel[len - n].re = v;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    kernel
        .iter()
        .enumerate()
        .map(|(k, h)| {
            // cycles per sample in [-0.5, 0.5)
            let f = if k < len / 2 { k as f64 } else { k as f64 - len as f64 } / len as f64;
            let window = match filter {
                Filter::Ramp => 1.0,
                Filter::SheppLogan if f == 0.0 => 1.0,
                Filter::SheppLogan => (PI * f).sin() / (PI * f),
                Filter::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
            };
            h.re * window
        })
        .collect()
}

/// Filters every row of an `[angles, cols]` sinogram, zero-padding to the next
/// power of two at least twice the row length.
pub fn filter_sinogram(sino: &Array2<f64>, filter: Filter) -> Array2<f64> {
    let (n_angles, cols) = sino.dim();
    let len = (2 * cols).next_power_of_two().max(64);
    let response = filter_response(filter, len);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut out = Array2::zeros((n_angles, cols));
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (row, mut dst) in sino.rows().into_iter().zip(out.rows_mut()) {
        buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            b.re = *v;
        }
        forward.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&response) {
            *b *= *h;
        }
        inverse.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re / len as f64;
        }
    }
    out
}

#[inline]
fn sample_linear(row: ArrayView1<f64>, t: f64) -> f64 {
    let n = row.len();
    if t <= -1.0 || t >= n as f64 {
        return 0.0;
    }
    let lo = t.floor();
    let w = t - lo;
    let i = lo as isize;
    let a = if i >= 0 { row[i as usize] } else { 0.0 };
    let b = if i + 1 < n as isize { row[(i + 1) as usize] } else { 0.0 };
    a * (1.0 - w) + b * w
}

/// Pixel-driven back-projection of an `[angles, cols]` sinogram onto an
/// `out_size²` grid with linear detector interpolation, without filtering or
/// angular weighting. Row `j` of the result is `y`, column `i` is `x`.
pub fn backproject(sino: &Array2<f64>, angles: &[f64], out_size: usize) -> Array2<f64> {
    let cols = sino.ncols();
    let det_center = (cols as f64 - 1.0) / 2.0;
    let img_center = (out_size as f64 - 1.0) / 2.0;
    let mut out = Array2::zeros((out_size, out_size));
    for (row, &theta) in sino.rows().into_iter().zip(angles) {
        let (sin, cos) = theta.sin_cos();
        for j in 0..out_size {
            let y = j as f64 - img_center;
            let t0 = -y * sin + det_center - img_center * cos;
            for i in 0..out_size {
                out[[j, i]] += sample_linear(row, t0 + i as f64 * cos);
            }
        }
    }
    out
}

/// Zeroes pixels outside the circle inscribed in the square grid.
pub fn mask_circle(img: &mut Array2<f64>) {
    let n = img.nrows();
    let c = (n as f64 - 1.0) / 2.0;
    let r2 = (n as f64 / 2.0).powi(2);
    for ((j, i), v) in img.indexed_iter_mut() {
        if (i as f64 - c).powi(2) + (j as f64 - c).powi(2) > r2 {
            *v = 0.0;
        }
    }
}

/// Filtered back-projection of one sinogram, in units of the sinogram value
/// per detector pixel.
pub fn fbp(sino: &Array2<f64>, angles: &[f64], filter: Filter, out_size: usize) -> Result<Array2<f64>> {
    let (n_angles, cols) = sino.dim();
    if n_angles < 2 {
        return Err(QuoptError::TooFewAngles(n_angles));
    }
    if angles.len() != n_angles {
        return Err(QuoptError::GeometryMismatch(format!(
            "{} angles for a sinogram with {n_angles} rows",
            angles.len()
        )));
    }
    if out_size == 0 || out_size > cols {
        return Err(QuoptError::InvalidParameter(format!(
            "output size {out_size} must be in 1..={cols}"
        )));
    }
    let filtered = filter_sinogram(sino, filter);
    let mut img = backproject(&filtered, angles, out_size);
    img.mapv_inplace(|v| v * PI / n_angles as f64);
    mask_circle(&mut img);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_response_is_zero_at_dc_and_half_at_nyquist() {
        let h = filter_response(Filter::Ramp, 256);
        assert!(h[0].abs() < 1e-3);
        assert!((h[128] - 0.5).abs() < 1e-3);
        // monotone in |f|
        assert!(h[1..128].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn windows_attenuate_high_frequencies() {
        let ramp = filter_response(Filter::Ramp, 128);
        let sl = filter_response(Filter::SheppLogan, 128);
        let hann = filter_response(Filter::Hann, 128);
        assert!(sl[60] < ramp[60] && hann[60] < sl[60]);
        assert!(hann[64].abs() < 1e-12);
    }

    #[test]
    fn zero_sinogram_gives_zero_slice() {
        let sino = Array2::zeros((10, 16));
        let angles: Vec<f64> = (0..10).map(|a| a as f64 * PI / 10.0).collect();
        let img = fbp(&sino, &angles, Filter::Ramp, 16).unwrap();
        assert!(img.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn argument_errors() {
        let sino = Array2::zeros((1, 8));
        assert!(matches!(fbp(&sino, &[0.0], Filter::Ramp, 8), Err(QuoptError::TooFewAngles(1))));
        let sino = Array2::zeros((2, 8));
        assert!(fbp(&sino, &[0.0, 1.0], Filter::Ramp, 9).is_err());
        assert!(fbp(&sino, &[0.0], Filter::Ramp, 8).is_err());
    }

    #[test]
    fn filter_names_round_trip() {
        for f in [Filter::Ramp, Filter::SheppLogan, Filter::Hann] {
            assert_eq!(f.to_string().parse::<Filter>().unwrap(), f);
        }
        assert!("butterworth".parse::<Filter>().is_err());
    }
}
