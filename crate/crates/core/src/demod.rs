//! Per-pixel fringe demodulation.
//!
//! The DFT route takes the ratio of the fringe harmonic to the DC term,
//! `V = 2·|F[n]| / |F[0]|`, which for a raised cosine
//! `n0·(1 + V cos(...))` sampled over an integer number of periods gives
//! `2·(M·n0·V/2) / (M·n0) = V` exactly. Bins are 0-based here: `F[0]` is the
//! DC component, `F[n]` the fringe harmonic.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{QuoptError, Result};
use crate::interferometer::{FringeStack, ScanConfig};

/// Scans deviating from an integer number of periods by more than this
/// fraction of a period are flagged for spectral leakage.
pub const LEAKAGE_TOLERANCE: f64 = 0.02;

/// Fringe harmonics weaker than this fraction of DC are treated as absent.
const ZERO_VISIBILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemodMethod {
    Fft,
    MinMax,
}

impl fmt::Display for DemodMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemodMethod::Fft => "fft",
            DemodMethod::MinMax => "minmax",
        })
    }
}

impl FromStr for DemodMethod {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fft" => Ok(DemodMethod::Fft),
            "minmax" => Ok(DemodMethod::MinMax),
            _ => Err(QuoptError::InvalidParameter(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    None,
    /// Periodic Hann; amplitude is corrected for its coherent gain of ½.
    Hann,
}

impl FromStr for Window {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Window::None),
            "hann" => Ok(Window::Hann),
            _ => Err(QuoptError::InvalidParameter(format!("unknown window '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinChoice {
    Auto,
    Fixed(usize),
}

impl FromStr for BinChoice {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(BinChoice::Auto);
        }
        s.parse()
            .map(BinChoice::Fixed)
            .map_err(|_| QuoptError::InvalidParameter(format!("bin must be 'auto' or an integer, got '{s}'")))
    }
}

/// Visibility, mean level and fringe phase of every pixel at one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityImage {
    pub visibility: Array2<f64>,
    /// Mean counts per frame.
    pub amplitude: Array2<f64>,
    /// Fringe phase wrapped to (−π, π]; 0 where `valid` is false.
    pub phase: Array2<f64>,
    /// Pixels with a measurable fringe.
    pub valid: Array2<bool>,
    /// Fringe bin used (0 for the min/max method).
    pub bin_used: usize,
    pub method: DemodMethod,
    pub angle: f64,
    pub pixel_pitch: f64,
    /// Scan length is not an integer number of fringe periods.
    pub leakage_warning: bool,
}

/// `(max − min) / (max + min)` of one pixel's series.
pub fn visibility_minmax(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(QuoptError::InvalidParameter(format!(
            "need at least 2 samples, got {}",
            series.len()
        )));
    }
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    if max + min == 0.0 {
        return Err(QuoptError::DegenerateSeries);
    }
    Ok((max - min) / (max + min))
}

/// Fringe bin implied by the scan geometry.
pub fn fringe_bin_from_config(cfg: &ScanConfig) -> usize {
    cfg.periods().round() as usize
}

/// Whether the scan spans a non-integer number of periods.
pub fn has_leakage(cfg: &ScanConfig) -> bool {
    let p = cfg.periods();
    (p - p.round()).abs() > LEAKAGE_TOLERANCE
}

fn check_bin(bin: usize, len: usize) -> Result<()> {
    if bin == 0 || bin >= len / 2 || len < 2 * bin + 2 {
        return Err(QuoptError::BinOutOfRange { bin, len });
    }
    Ok(())
}

fn window_weights(window: Window, m: usize) -> Vec<f64> {
    match window {
        Window::None => vec![1.0; m],
        Window::Hann => (0..m)
            .map(|k| 0.5 * (1.0 - (std::f64::consts::TAU * k as f64 / m as f64).cos()))
            .collect(),
    }
}

/// Calls `f(r, c, spectrum)` for every pixel, one row per task.
fn for_each_spectrum<T, F>(stack: &FringeStack, window: Window, f: F) -> Vec<Vec<T>>
where
    T: Send,
    F: Fn(&[Complex<f64>]) -> T + Sync,
{
    let (m, rows, cols) = stack.counts.dim();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(m);
    let weights = window_weights(window, m);
    (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut buf = vec![Complex::new(0.0, 0.0); m];
            let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            (0..cols)
                .map(|c| {
                    for (k, b) in buf.iter_mut().enumerate() {
                        *b = Complex::new(stack.counts[[k, r, c]] * weights[k], 0.0);
                    }
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    f(&buf)
                })
                .collect()
        })
        .collect()
}

/// Spectrum peak over bins `[2, M/2)` of the spatially averaged magnitude.
pub fn fringe_bin_from_spectrum(stack: &FringeStack) -> Result<usize> {
    let m = stack.n_steps();
    if m < 8 {
        return Err(QuoptError::InvalidParameter(format!("need at least 8 steps, got {m}")));
    }
    let per_pixel = for_each_spectrum(stack, Window::None, |s| s[..m / 2].iter().map(|z| z.norm()).collect::<Vec<_>>());
    let mut mean = vec![0.0; m / 2];
    for row in &per_pixel {
        for spec in row {
            for (acc, v) in mean.iter_mut().zip(spec) {
                *acc += v;
            }
        }
    }
    let candidates = &mean[2..];
    let (offset, &peak) = candidates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(QuoptError::NoFringeDetected)?;
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if peak <= ZERO_VISIBILITY * mean[0] || peak <= 3.0 * median {
        return Err(QuoptError::NoFringeDetected);
    }
    Ok(offset + 2)
}

/// Fringe bin from the scan config, cross-checked against the data spectrum.
pub fn select_fringe_bin(stack: &FringeStack) -> Result<usize> {
    let m = stack.n_steps();
    if m < 8 {
        return Err(QuoptError::InvalidParameter(format!("need at least 8 steps, got {m}")));
    }
    let from_config = fringe_bin_from_config(&stack.config);
    let from_data = fringe_bin_from_spectrum(stack)?;
    if from_config != from_data {
        return Err(QuoptError::BinMismatch { from_config, from_data });
    }
    Ok(from_config)
}

/// Visibility, amplitude, phase and validity of one pixel.
type PixelFit = (f64, f64, f64, bool);

/// DFT demodulation of every pixel.
pub fn demodulate_stack(stack: &FringeStack, bin: BinChoice, window: Window) -> Result<VisibilityImage> {
    let m = stack.n_steps();
    if stack.counts.iter().any(|v| !v.is_finite()) {
        return Err(QuoptError::InvalidParameter("stack contains non-finite counts".into()));
    }
    let n = match bin {
        BinChoice::Fixed(n) => n,
        BinChoice::Auto => select_fringe_bin(stack)?,
    };
    check_bin(n, m)?;
    let gain: f64 = window_weights(window, m).iter().sum();

    let pixels = for_each_spectrum(stack, window, |s| -> PixelFit {
        let dc = s[0].norm();
        let harmonic = s[n];
        if dc == 0.0 || harmonic.norm() <= ZERO_VISIBILITY * dc {
            (0.0, dc / gain, 0.0, false)
        } else {
            (2.0 * harmonic.norm() / dc, dc / gain, harmonic.arg(), true)
        }
    });
    let (rows, cols) = (stack.rows(), stack.cols());
    let pick = |f: &dyn Fn(&PixelFit) -> f64| Array2::from_shape_fn((rows, cols), |(r, c)| f(&pixels[r][c]));
    Ok(VisibilityImage {
        visibility: pick(&|p| p.0),
        amplitude: pick(&|p| p.1),
        phase: pick(&|p| p.2),
        valid: Array2::from_shape_fn((rows, cols), |(r, c)| pixels[r][c].3),
        bin_used: n,
        method: DemodMethod::Fft,
        angle: stack.angle,
        pixel_pitch: stack.pixel_pitch,
        leakage_warning: has_leakage(&stack.config),
    })
}

/// Extremum-based demodulation of every pixel. No phase is estimated.
pub fn demodulate_minmax(stack: &FringeStack) -> Result<VisibilityImage> {
    let (_, rows, cols) = stack.counts.dim();
    let pixels: Vec<(f64, f64)> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let series = stack.series(idx / cols, idx % cols);
            let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok((visibility_minmax(&series)?, (max + min) / 2.0))
        })
        .collect::<Result<_>>()?;
    Ok(VisibilityImage {
        visibility: Array2::from_shape_fn((rows, cols), |(r, c)| pixels[r * cols + c].0),
        amplitude: Array2::from_shape_fn((rows, cols), |(r, c)| pixels[r * cols + c].1),
        phase: Array2::zeros((rows, cols)),
        valid: Array2::from_elem((rows, cols), true),
        bin_used: 0,
        method: DemodMethod::MinMax,
        angle: stack.angle,
        pixel_pitch: stack.pixel_pitch,
        leakage_warning: has_leakage(&stack.config),
    })
}

/// Dispatches on `method`.
pub fn demodulate(stack: &FringeStack, method: DemodMethod, bin: BinChoice, window: Window) -> Result<VisibilityImage> {
    match method {
        DemodMethod::Fft => demodulate_stack(stack, bin, window),
        DemodMethod::MinMax => demodulate_minmax(stack),
    }
}
