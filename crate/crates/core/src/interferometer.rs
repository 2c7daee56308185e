//! Phase-scanned fringe stacks from transmission images.
//!
//! Each pixel follows `n0·(1 + V·cos(2π·k·step/period + φ))` over the scan,
//! where the visibility `V = v_sys·t` is set by the idler transmission `t`
//! (amplitude `√T` or intensity `T`).

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{QuoptError, Result};
use crate::phantom::Phantom;
use crate::projection::{apply_psf, DetectorGeometry, Projector, TransmissionImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmissionExponent {
    /// `V ∝ √T`
    Amplitude,
    /// `V ∝ T`
    Intensity,
}

impl TransmissionExponent {
    /// Power of `T` that sets the visibility; also the factor relating
    /// `−ln(V/v_sys)` to the line integral.
    pub fn power(self) -> f64 {
        match self {
            TransmissionExponent::Amplitude => 0.5,
            TransmissionExponent::Intensity => 1.0,
        }
    }
}

impl fmt::Display for TransmissionExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransmissionExponent::Amplitude => "amplitude",
            TransmissionExponent::Intensity => "intensity",
        })
    }
}

impl FromStr for TransmissionExponent {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(TransmissionExponent::Amplitude),
            "intensity" => Ok(TransmissionExponent::Intensity),
            _ => Err(QuoptError::InvalidParameter(format!("unknown transmission exponent '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Poisson,
    /// Poisson shot noise followed by additive Gaussian read noise (counts).
    PoissonGaussian { read_sigma: f64 },
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::None => f.write_str("none"),
            NoiseModel::Poisson => f.write_str("poisson"),
            NoiseModel::PoissonGaussian { .. } => f.write_str("poisson+gaussian"),
        }
    }
}

/// Acquisition parameters of one fringe visibility scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub lambda_pump_nm: f64,
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
    /// Number of phase steps `M`.
    pub n_steps: usize,
    /// Mirror travel per step, µm.
    pub step_size_um: f64,
    /// Mirror travel per full fringe, µm.
    pub fringe_period_um: f64,
    /// Visibility ceiling of the interferometer.
    pub v_sys: f64,
    /// Mean counts per pixel per frame.
    pub n0: f64,
    pub transmission_exponent: TransmissionExponent,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig::with_periods(40, 0.125, 5.0)
    }
}

impl ScanConfig {
    /// Default optics with a scan of `n_steps` steps holding `periods` fringes.
    pub fn with_periods(n_steps: usize, step_size_um: f64, periods: f64) -> Self {
        ScanConfig {
            lambda_pump_nm: 532.0,
            lambda_signal_nm: 810.0,
            lambda_idler_nm: 1550.0,
            n_steps,
            step_size_um,
            fringe_period_um: n_steps as f64 * step_size_um / periods,
            v_sys: 0.3,
            n0: 1.0e4,
            transmission_exponent: TransmissionExponent::Amplitude,
            noise: NoiseModel::None,
            seed: 1,
        }
    }

    /// Total mirror travel, µm.
    pub fn scan_length_um(&self) -> f64 {
        self.n_steps as f64 * self.step_size_um
    }

    /// Number of fringe periods spanned by the scan.
    pub fn periods(&self) -> f64 {
        self.scan_length_um() / self.fringe_period_um
    }

    /// Interferometric phase advance per step, radians.
    pub fn phase_step(&self) -> f64 {
        TAU * self.step_size_um / self.fringe_period_um
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QuoptError::InvalidParameter(msg));
        if self.n_steps < 8 {
            return bad(format!("need at least 8 phase steps, got {}", self.n_steps));
        }
        for (name, v) in [
            ("step_size_um", self.step_size_um),
            ("fringe_period_um", self.fringe_period_um),
            ("n0", self.n0),
            ("lambda_pump_nm", self.lambda_pump_nm),
            ("lambda_signal_nm", self.lambda_signal_nm),
            ("lambda_idler_nm", self.lambda_idler_nm),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(self.v_sys > 0.0 && self.v_sys <= 1.0) {
            return bad(format!("v_sys must lie in (0, 1], got {}", self.v_sys));
        }
        if let NoiseModel::PoissonGaussian { read_sigma } = self.noise {
            if !(read_sigma >= 0.0) || !read_sigma.is_finite() {
                return bad(format!("read noise sigma must be >= 0, got {read_sigma}"));
            }
        }
        Ok(())
    }

    /// Visibility produced by transmission `t`.
    pub fn visibility_for(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        self.v_sys
            * match self.transmission_exponent {
                TransmissionExponent::Amplitude => t.sqrt(),
                TransmissionExponent::Intensity => t,
            }
    }
}

/// Noise-free ground truth retained alongside synthesized data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub visibility: Array2<f64>,
    pub phase: Array2<f64>,
}

/// Counts versus phase step for every camera pixel at one rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeStack {
    /// `[M, rows, cols]`, phase step slowest.
    pub counts: Array3<f64>,
    pub config: ScanConfig,
    pub angle: f64,
    pub pixel_pitch: f64,
    pub truth: Option<GroundTruth>,
}

impl FringeStack {
    pub fn n_steps(&self) -> usize {
        self.counts.dim().0
    }

    pub fn rows(&self) -> usize {
        self.counts.dim().1
    }

    pub fn cols(&self) -> usize {
        self.counts.dim().2
    }

    /// Count series of one pixel.
    pub fn series(&self, r: usize, c: usize) -> Vec<f64> {
        self.counts.slice(ndarray::s![.., r, c]).to_vec()
    }

    /// Multiplies every count by `gain`.
    pub fn scaled(&self, gain: f64) -> FringeStack {
        FringeStack { counts: self.counts.mapv(|v| v * gain), ..self.clone() }
    }
}

/// Smooth wavefront-tilt phase: a low-order polynomial over the field.
pub fn default_phase_map(rows: usize, cols: usize) -> Array2<f64> {
    let norm = |i: usize, n: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (x, y) = (norm(c, cols), norm(r, rows));
        1.2 * x + 0.7 * y + 0.4 * (x * x - y * y) + 0.3 * x * y
    })
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the noise stream for one pixel, independent of evaluation order.
pub fn pixel_stream_seed(seed: u64, angle: f64, r: usize, c: usize) -> u64 {
    let mut h = mix(seed);
    for v in [angle.to_bits(), r as u64, c as u64] {
        h = mix(h ^ v);
    }
    h
}

/// Synthesizes the fringe stack of one transmission image.
pub fn synthesize_fvs(img: &TransmissionImage, cfg: &ScanConfig, phase_map: &Array2<f64>) -> Result<FringeStack> {
    cfg.validate()?;
    let (rows, cols) = img.transmission.dim();
    if phase_map.dim() != (rows, cols) {
        return Err(QuoptError::ConfigMismatch(format!(
            "phase map {:?} does not match image {rows}x{cols}",
            phase_map.dim()
        )));
    }
    if let Some(t) = img.transmission.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(QuoptError::InvalidParameter(format!("transmission {t} outside [0, 1]")));
    }
    if phase_map.iter().any(|p| !p.is_finite()) {
        return Err(QuoptError::InvalidParameter("phase map must be finite".into()));
    }

    let m = cfg.n_steps;
    let dphi = cfg.phase_step();
    let visibility = img.transmission.mapv(|t| cfg.visibility_for(t));

    let row_series: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut out = vec![0.0; m * cols];
            for c in 0..cols {
                let (v, phi) = (visibility[[r, c]], phase_map[[r, c]]);
                let series = &mut out[c * m..(c + 1) * m];
                for (k, x) in series.iter_mut().enumerate() {
                    *x = cfg.n0 * (1.0 + v * (dphi * k as f64 + phi).cos());
                }
                apply_noise(series, cfg, img.angle, r, c);
            }
            out
        })
        .collect();

    let counts = Array3::from_shape_fn((m, rows, cols), |(k, r, c)| row_series[r][c * m + k]);
    Ok(FringeStack {
        counts,
        config: *cfg,
        angle: img.angle,
        pixel_pitch: img.pixel_pitch,
        truth: Some(GroundTruth { visibility, phase: phase_map.clone() }),
    })
}

fn apply_noise(series: &mut [f64], cfg: &ScanConfig, angle: f64, r: usize, c: usize) {
    let read_sigma = match cfg.noise {
        NoiseModel::None => return,
        NoiseModel::Poisson => 0.0,
        NoiseModel::PoissonGaussian { read_sigma } => read_sigma,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(pixel_stream_seed(cfg.seed, angle, r, c));
    for x in series.iter_mut() {
        *x = if *x > 0.0 {
            Poisson::new(*x).expect("positive finite mean").sample(&mut rng)
        } else {
            0.0
        };
    }
    if read_sigma > 0.0 {
        let normal = Normal::new(0.0, read_sigma).expect("finite sigma");
        for x in series.iter_mut() {
            *x = (*x + normal.sample(&mut rng)).max(0.0);
        }
    }
}

/// Everything besides the scan itself needed to simulate an acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub detector: DetectorGeometry,
    /// Gaussian blur applied to each transmission image; 0 disables it.
    pub psf_fwhm_mm: f64,
    /// Per-pixel interferometric phase; defaults to [`default_phase_map`].
    pub phase_map: Option<Array2<f64>>,
}

impl SimulationSetup {
    pub fn new(detector: DetectorGeometry) -> Self {
        SimulationSetup { detector, psf_fwhm_mm: 0.0, phase_map: None }
    }
}

/// One fringe stack per rotation angle: project, optionally blur, synthesize.
pub fn run_simulation(
    phantom: &Phantom,
    cfg: &ScanConfig,
    angles: &[f64],
    setup: &SimulationSetup,
) -> Result<Vec<FringeStack>> {
    cfg.validate()?;
    if angles.is_empty() {
        return Err(QuoptError::InvalidParameter("angle list is empty".into()));
    }
    if let Some(a) = angles.iter().find(|a| !(0.0..TAU).contains(*a)) {
        return Err(QuoptError::InvalidParameter(format!("angle {a} outside [0, 2π)")));
    }
    let det = setup.detector;
    let phase_map = match &setup.phase_map {
        Some(p) => p.clone(),
        None => default_phase_map(det.rows, det.cols),
    };
    let projector = Projector::new(phantom, det)?;
    angles
        .par_iter()
        .map(|&angle| {
            let mut img = projector.project(angle);
            if setup.psf_fwhm_mm > 0.0 {
                img = apply_psf(&img, setup.psf_fwhm_mm)?;
            }
            synthesize_fvs(&img, cfg, &phase_map)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::GridSpec;

    fn image(t: Array2<f64>) -> TransmissionImage {
        TransmissionImage { pixel_pitch: 0.05, angle: 0.0, transmission: t, pathlen: None }
    }

    #[test]
    fn default_scan_has_five_periods_over_four_microns() {
        let cfg = ScanConfig::default();
        assert_eq!(cfg.n_steps, 40);
        assert!(cfg.scan_length_um() >= 4.0);
        assert_eq!(cfg.periods(), 5.0);
        assert_eq!(cfg.lambda_pump_nm, 532.0);
        assert_eq!(cfg.lambda_signal_nm, 810.0);
        assert_eq!(cfg.lambda_idler_nm, 1550.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let ok = ScanConfig::default();
        assert!(ScanConfig { n_steps: 7, ..ok }.validate().is_err());
        assert!(ScanConfig { v_sys: 0.0, ..ok }.validate().is_err());
        assert!(ScanConfig { v_sys: 1.2, ..ok }.validate().is_err());
        assert!(ScanConfig { step_size_um: -1.0, ..ok }.validate().is_err());
        assert!(ScanConfig { noise: NoiseModel::PoissonGaussian { read_sigma: -1.0 }, ..ok }
            .validate()
            .is_err());
    }

    #[test]
    fn full_visibility_fringe_spans_zero_to_twice_n0() {
        let cfg = ScanConfig { v_sys: 1.0, ..Default::default() };
        let phase = Array2::zeros((2, 3));
        let stack = synthesize_fvs(&image(Array2::ones((2, 3))), &cfg, &phase).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let s = stack.series(r, c);
                let max = s.iter().cloned().fold(f64::MIN, f64::max);
                let min = s.iter().cloned().fold(f64::MAX, f64::min);
                assert!((max - 2.0 * cfg.n0).abs() < 1e-9);
                assert!(min.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn opaque_pixel_gives_constant_counts() {
        let mut t = Array2::ones((3, 3));
        t[[1, 1]] = 0.0;
        let cfg = ScanConfig::default();
        let stack = synthesize_fvs(&image(t), &cfg, &default_phase_map(3, 3)).unwrap();
        assert!(stack.series(1, 1).iter().all(|x| *x == cfg.n0));
        assert_eq!(stack.truth.as_ref().unwrap().visibility[[1, 1]], 0.0);
    }

    #[test]
    fn intensity_and_amplitude_modes() {
        let t = Array2::from_elem((1, 1), 0.25);
        let amp = ScanConfig { v_sys: 1.0, ..Default::default() };
        let int = ScanConfig { transmission_exponent: TransmissionExponent::Intensity, ..amp };
        let p = Array2::zeros((1, 1));
        let va = synthesize_fvs(&image(t.clone()), &amp, &p).unwrap().truth.unwrap().visibility[[0, 0]];
        let vi = synthesize_fvs(&image(t), &int, &p).unwrap().truth.unwrap().visibility[[0, 0]];
        assert_eq!(va, 0.5);
        assert_eq!(vi, 0.25);
    }

    #[test]
    fn dimension_and_range_errors() {
        let cfg = ScanConfig::default();
        let err = synthesize_fvs(&image(Array2::ones((2, 2))), &cfg, &Array2::zeros((2, 3))).unwrap_err();
        assert!(matches!(err, QuoptError::ConfigMismatch(_)));
        let err = synthesize_fvs(&image(Array2::from_elem((1, 1), 1.5)), &cfg, &Array2::zeros((1, 1)));
        assert!(err.is_err());
    }

    #[test]
    fn poisson_noise_is_integer_and_seeded() {
        let cfg = ScanConfig { noise: NoiseModel::Poisson, seed: 42, ..Default::default() };
        let img = image(Array2::from_elem((4, 5), 0.6));
        let p = default_phase_map(4, 5);
        let a = synthesize_fvs(&img, &cfg, &p).unwrap();
        let b = synthesize_fvs(&img, &cfg, &p).unwrap();
        assert_eq!(a.counts, b.counts);
        assert!(a.counts.iter().all(|x| x.fract() == 0.0 && *x >= 0.0));
        let c = synthesize_fvs(&img, &ScanConfig { seed: 43, ..cfg }, &p).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn read_noise_never_negative() {
        let cfg = ScanConfig {
            noise: NoiseModel::PoissonGaussian { read_sigma: 50.0 },
            n0: 5.0,
            v_sys: 1.0,
            ..Default::default()
        };
        let stack = synthesize_fvs(&image(Array2::ones((3, 3))), &cfg, &Array2::zeros((3, 3))).unwrap();
        assert!(stack.counts.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn simulation_of_empty_phantom_is_uniform() {
        let grid = GridSpec::cube(16, 0.1);
        let phantom = Phantom::zeros(grid).unwrap();
        let cfg = ScanConfig::default();
        let mut setup = SimulationSetup::new(DetectorGeometry::matching(&grid));
        setup.phase_map = Some(Array2::zeros((16, 16)));
        let stacks = run_simulation(&phantom, &cfg, &[0.3], &setup).unwrap();
        assert_eq!(stacks.len(), 1);
        let s = &stacks[0];
        assert_eq!(s.counts.dim(), (40, 16, 16));
        for k in 0..40 {
            let frame = s.counts.index_axis(ndarray::Axis(0), k);
            let first = frame[[0, 0]];
            assert!(frame.iter().all(|x| *x == first));
        }
    }

    #[test]
    fn simulation_rejects_bad_angles() {
        let grid = GridSpec::cube(8, 0.1);
        let phantom = Phantom::zeros(grid).unwrap();
        let setup = SimulationSetup::new(DetectorGeometry::matching(&grid));
        let cfg = ScanConfig::default();
        assert!(run_simulation(&phantom, &cfg, &[], &setup).is_err());
        assert!(run_simulation(&phantom, &cfg, &[7.0], &setup).is_err());
    }
}
