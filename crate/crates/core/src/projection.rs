//! Parallel-beam projection with Joseph (interpolating) ray traversal.
//!
//! Projecting at angle `θ` images the phantom after rotating it by `θ`
//! counter-clockwise about z, with the beam travelling along +y. In the
//! phantom frame a detector column at lateral offset `s` therefore integrates
//! along the line `{p : p·u = s}` with `u = (cos θ, −sin θ)`. Detector row `r`
//! sits at height `z = (r − (rows−1)/2)·pixel_pitch`.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

use crate::error::{QuoptError, Result};
use crate::phantom::{GridSpec, Phantom};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Pixel pitch projected into the object plane, mm.
    pub pixel_pitch: f64,
    /// Column offset of the rotation axis from the detector center, pixels.
    pub col_offset_px: f64,
}

impl DetectorGeometry {
    pub fn new(rows: usize, cols: usize, pixel_pitch: f64) -> Self {
        DetectorGeometry { rows, cols, pixel_pitch, col_offset_px: 0.0 }
    }

    /// Detector that samples a phantom grid one-to-one.
    pub fn matching(grid: &GridSpec) -> Self {
        DetectorGeometry::new(grid.nz, grid.nx.max(grid.ny), grid.pitch)
    }

    /// Lateral offset (mm) of column `c` from the rotation axis.
    #[inline]
    pub fn s(&self, c: usize) -> f64 {
        (c as f64 - (self.cols as f64 - 1.0) / 2.0 - self.col_offset_px) * self.pixel_pitch
    }

    /// Height (mm) of row `r`.
    #[inline]
    pub fn z(&self, r: usize) -> f64 {
        (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pixel_pitch
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(QuoptError::InvalidParameter("detector must have rows and columns".into()));
        }
        if !(self.pixel_pitch > 0.0) || !self.pixel_pitch.is_finite() {
            return Err(QuoptError::InvalidParameter(format!(
                "pixel pitch must be > 0, got {}",
                self.pixel_pitch
            )));
        }
        if !self.col_offset_px.is_finite() {
            return Err(QuoptError::InvalidParameter("column offset must be finite".into()));
        }
        Ok(())
    }
}

/// Idler transmission seen by the camera at one rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionImage {
    pub pixel_pitch: f64,
    pub angle: f64,
    /// `[rows, cols]`, each in `[0, 1]`.
    pub transmission: Array2<f64>,
    /// Line integrals `∫μ dl`; dropped once the image is blurred.
    pub pathlen: Option<Array2<f64>>,
}

impl TransmissionImage {
    pub fn from_pathlen(pathlen: Array2<f64>, pixel_pitch: f64, angle: f64) -> Self {
        TransmissionImage {
            pixel_pitch,
            angle,
            transmission: pathlen.mapv(|p| (-p).exp()),
            pathlen: Some(pathlen),
        }
    }

    pub fn rows(&self) -> usize {
        self.transmission.nrows()
    }

    pub fn cols(&self) -> usize {
        self.transmission.ncols()
    }
}

/// Interpolation taps of one ray through a 2D slice: flat index `j*nx + i` and
/// weight (already including the step length in mm).
type RayTaps = Vec<(usize, f64)>;

/// Taps of the ray at lateral offset `s` (mm), angle `theta`, in a `ny × nx`
/// slice of pitch `pitch`. Samples outside the slice contribute nothing.
fn ray_taps(grid: &GridSpec, s: f64, theta: f64, taps: &mut RayTaps) {
    taps.clear();
    let (sin, cos) = theta.sin_cos();
    let (ux, uy) = (cos, -sin);
    let (dx, dy) = (sin, cos);
    let (nx, ny, p) = (grid.nx, grid.ny, grid.pitch);
    let (ox, oy) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0);

    if dy.abs() >= dx.abs() {
        let step = p / dy.abs();
        for j in 0..ny {
            let y = (j as f64 - oy) * p;
            let t = (y - s * uy) / dy;
            let fi = (s * ux + t * dx) / p + ox;
            push_linear(fi, nx, |i, w| taps.push((j * nx + i, w * step)));
        }
    } else {
        let step = p / dx.abs();
        for i in 0..nx {
            let x = (i as f64 - ox) * p;
            let t = (x - s * ux) / dx;
            let fj = (s * uy + t * dy) / p + oy;
            push_linear(fj, ny, |j, w| taps.push((j * nx + i, w * step)));
        }
    }
}

/// Splits fractional index `f` into its two linear-interpolation neighbours
/// inside `[0, n)`.
#[inline]
fn push_linear<F: FnMut(usize, f64)>(f: f64, n: usize, mut emit: F) {
    if f <= -1.0 || f >= n as f64 {
        return;
    }
    let lo = f.floor();
    let w_hi = f - lo;
    let lo_i = lo as isize;
    if lo_i >= 0 && w_hi < 1.0 {
        emit(lo_i as usize, 1.0 - w_hi);
    }
    let hi_i = lo_i + 1;
    if hi_i < n as isize && w_hi > 0.0 {
        emit(hi_i as usize, w_hi);
    }
}

/// z-interpolation taps of each detector row into phantom slices.
fn row_taps(grid: &GridSpec, det: &DetectorGeometry) -> Vec<Vec<(usize, f64)>> {
    (0..det.rows)
        .map(|r| {
            let fk = det.z(r) / grid.pitch + (grid.nz as f64 - 1.0) / 2.0;
            let mut taps = Vec::with_capacity(2);
            push_linear(fk, grid.nz, |k, w| taps.push((k, w)));
            taps
        })
        .collect()
}

/// Projector bound to one phantom and detector, with coverage checked once.
pub struct Projector<'a> {
    phantom: &'a Phantom,
    detector: DetectorGeometry,
    rows: Vec<Vec<(usize, f64)>>,
}

impl<'a> Projector<'a> {
    pub fn new(phantom: &'a Phantom, detector: DetectorGeometry) -> Result<Self> {
        detector.validate()?;
        check_coverage(phantom, &detector)?;
        let rows = row_taps(&phantom.grid(), &detector);
        Ok(Projector { phantom, detector, rows })
    }

    pub fn detector(&self) -> DetectorGeometry {
        self.detector
    }

    /// `[rows, cols]` line integrals at `angle` (radians).
    pub fn line_integrals(&self, angle: f64) -> Array2<f64> {
        let grid = self.phantom.grid();
        let det = &self.detector;
        let mu = self.phantom.mu();
        let slab = grid.nx * grid.ny;
        let flat = mu.as_slice().expect("phantom arrays are contiguous");

        let columns: Vec<Vec<f64>> = (0..det.cols)
            .into_par_iter()
            .map(|c| {
                let mut taps = Vec::new();
                ray_taps(&grid, det.s(c), angle, &mut taps);
                self.rows
                    .iter()
                    .map(|row| {
                        let mut sum = 0.0;
                        for &(k, wz) in row {
                            let slice = &flat[k * slab..(k + 1) * slab];
                            let line: f64 = taps.iter().map(|&(idx, w)| slice[idx] * w).sum();
                            sum += wz * line;
                        }
                        sum
                    })
                    .collect()
            })
            .collect();

        Array2::from_shape_fn((det.rows, det.cols), |(r, c)| columns[c][r])
    }

    pub fn project(&self, angle: f64) -> TransmissionImage {
        TransmissionImage::from_pathlen(self.line_integrals(angle), self.detector.pixel_pitch, angle)
    }
}

/// Phantom support must fit inside the detector field at every angle.
fn check_coverage(phantom: &Phantom, det: &DetectorGeometry) -> Result<()> {
    let grid = phantom.grid();
    let mut max_r: f64 = 0.0;
    let mut z_range: Option<(f64, f64)> = None;
    for ((k, j, i), v) in phantom.mu().indexed_iter() {
        if *v > 0.0 {
            max_r = max_r.max(grid.x(i as f64).hypot(grid.y(j as f64)));
            let z = grid.z(k as f64);
            z_range = Some(match z_range {
                None => (z, z),
                Some((lo, hi)) => (lo.min(z), hi.max(z)),
            });
        }
    }
    let Some((z_lo, z_hi)) = z_range else {
        return Ok(());
    };
    let reach = max_r + grid.pitch * std::f64::consts::FRAC_1_SQRT_2;
    let half = det.pixel_pitch / 2.0;
    let (s_lo, s_hi) = (det.s(0) - half, det.s(det.cols - 1) + half);
    if -reach < s_lo || reach > s_hi {
        return Err(QuoptError::GeometryMismatch(format!(
            "support radius {reach:.4} mm exceeds detector span [{s_lo:.4}, {s_hi:.4}] mm"
        )));
    }
    let (dz_lo, dz_hi) = (det.z(0) - half, det.z(det.rows - 1) + half);
    if z_lo - grid.pitch / 2.0 < dz_lo - 1e-12 || z_hi + grid.pitch / 2.0 > dz_hi + 1e-12 {
        return Err(QuoptError::GeometryMismatch(format!(
            "support z [{z_lo:.4}, {z_hi:.4}] mm not covered by detector rows [{dz_lo:.4}, {dz_hi:.4}] mm"
        )));
    }
    Ok(())
}

/// Transmission image of `phantom` at `angle` radians.
pub fn project(phantom: &Phantom, angle: f64, detector: DetectorGeometry) -> Result<TransmissionImage> {
    Ok(Projector::new(phantom, detector)?.project(angle))
}

/// Exact adjoint of the line-integral operator: scatters each detector value
/// back along the ray taps that produced it. `data[a]` is the `[rows, cols]`
/// image for `angles[a]`; the result is a `[nz, ny, nx]` volume.
pub fn backproject_adjoint(
    data: &[Array2<f64>],
    angles: &[f64],
    grid: GridSpec,
    detector: DetectorGeometry,
) -> Result<Array3<f64>> {
    detector.validate()?;
    if data.len() != angles.len() {
        return Err(QuoptError::GeometryMismatch(format!(
            "{} images for {} angles",
            data.len(),
            angles.len()
        )));
    }
    if let Some(d) = data.iter().find(|d| d.dim() != (detector.rows, detector.cols)) {
        return Err(QuoptError::GeometryMismatch(format!(
            "image {:?} does not match detector {}x{}",
            d.dim(),
            detector.rows,
            detector.cols
        )));
    }
    let rows = row_taps(&grid, &detector);
    let slab = grid.nx * grid.ny;
    let mut out = Array3::<f64>::zeros((grid.nz, grid.ny, grid.nx));
    // One slab per phantom slice so slices can be filled independently.
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(k, mut slice)| {
        let buf = slice.as_slice_mut().expect("contiguous slice");
        let mut taps = Vec::new();
        for (img, &angle) in data.iter().zip(angles) {
            for c in 0..detector.cols {
                ray_taps(&grid, detector.s(c), angle, &mut taps);
                for (r, row) in rows.iter().enumerate() {
                    for &(kk, wz) in row {
                        if kk != k {
                            continue;
                        }
                        let v = img[[r, c]] * wz;
                        if v != 0.0 {
                            for &(idx, w) in &taps {
                                buf[idx] += v * w;
                            }
                        }
                    }
                }
            }
        }
        debug_assert_eq!(buf.len(), slab);
    });
    Ok(out)
}

/// Separable Gaussian blur of the transmission image to emulate finite system
/// resolution. Edges are mirrored; `fwhm_mm == 0` returns the image unchanged.
pub fn apply_psf(img: &TransmissionImage, fwhm_mm: f64) -> Result<TransmissionImage> {
    if !(fwhm_mm >= 0.0) || !fwhm_mm.is_finite() {
        return Err(QuoptError::InvalidParameter(format!("PSF FWHM must be >= 0, got {fwhm_mm}")));
    }
    if fwhm_mm == 0.0 {
        return Ok(img.clone());
    }
    let sigma = fwhm_mm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()) / img.pixel_pitch;
    let kernel = gaussian_kernel(sigma);
    let blurred_rows = convolve_axis(&img.transmission, &kernel, Axis(1));
    let blurred = convolve_axis(&blurred_rows, &kernel, Axis(0));
    Ok(TransmissionImage {
        pixel_pitch: img.pixel_pitch,
        angle: img.angle,
        transmission: blurred.mapv(|v| v.clamp(0.0, 1.0)),
        pathlen: None,
    })
}

/// Half-sample symmetric extension; with a symmetric kernel this keeps the
/// image sum unchanged.
fn reflect(mut idx: isize, n: isize) -> usize {
    loop {
        if idx < 0 {
            idx = -idx - 1;
        } else if idx >= n {
            idx = 2 * n - idx - 1;
        } else {
            return idx as usize;
        }
    }
}

/// Normalized Gaussian taps out to 4σ.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve_axis(img: &Array2<f64>, kernel: &[f64], axis: Axis) -> Array2<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = Array2::<f64>::zeros(img.dim());
    for (src, mut dst) in img.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len() as isize;
        for (i, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                acc += w * src[reflect(i as isize + t as isize - radius, n)];
            }
            *d = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{rasterize, AnalyticShape};

    #[test]
    fn empty_phantom_is_fully_transparent() {
        let p = Phantom::zeros(GridSpec::cube(16, 0.1)).unwrap();
        let img = project(&p, 0.37, DetectorGeometry::new(16, 16, 0.1)).unwrap();
        assert!(img.transmission.iter().all(|t| *t == 1.0));
    }

    #[test]
    fn sphere_central_ray_is_diameter() {
        let grid = GridSpec::cube(64, 0.05);
        let (r, mu0) = (1.0, 0.8);
        let p = rasterize(&[AnalyticShape::sphere([0.0; 3], r, mu0)], grid).unwrap();
        // even detector: no center pixel, use an odd one
        let det = DetectorGeometry::new(65, 65, 0.05);
        for angle in [0.0, 0.3, 1.1] {
            let img = project(&p, angle, det).unwrap();
            let center = img.pathlen.as_ref().unwrap()[[32, 32]];
            assert!((center - 2.0 * r * mu0).abs() / (2.0 * r * mu0) < 0.01, "{center}");
        }
    }

    #[test]
    fn transmission_is_beer_lambert() {
        let grid = GridSpec::cube(32, 0.1);
        let p = rasterize(&[AnalyticShape::sphere([0.2, 0.0, 0.1], 0.8, 2.0)], grid).unwrap();
        let img = project(&p, 0.9, DetectorGeometry::matching(&grid)).unwrap();
        let path = img.pathlen.as_ref().unwrap();
        for (t, l) in img.transmission.iter().zip(path.iter()) {
            assert!((0.0..=1.0).contains(t));
            assert!((t - (-l).exp()).abs() <= 1e-12 * t.max(1e-300));
        }
    }

    #[test]
    fn detector_too_small_is_rejected() {
        let grid = GridSpec::cube(64, 0.05);
        let p = rasterize(&[AnalyticShape::sphere([0.0; 3], 1.2, 1.0)], grid).unwrap();
        let err = project(&p, 0.0, DetectorGeometry::new(64, 32, 0.05)).unwrap_err();
        assert!(matches!(err, QuoptError::GeometryMismatch(_)));
        let err = project(&p, 0.0, DetectorGeometry::new(20, 64, 0.05)).unwrap_err();
        assert!(matches!(err, QuoptError::GeometryMismatch(_)));
    }

    #[test]
    fn half_turn_projection_is_mirrored() {
        let grid = GridSpec::cube(48, 0.05);
        let p = rasterize(
            &[
                AnalyticShape::sphere([0.3, -0.2, 0.1], 0.3, 1.0),
                AnalyticShape::cylinder([-0.4, 0.1, -0.5], [0.1, 0.5, 0.6], 0.15, 2.0),
            ],
            grid,
        )
        .unwrap();
        let proj = Projector::new(&p, DetectorGeometry::matching(&grid)).unwrap();
        for theta in [0.0, 0.4, 1.3] {
            let a = proj.line_integrals(theta);
            let b = proj.line_integrals(theta + std::f64::consts::PI);
            let flipped = b.slice(ndarray::s![.., ..;-1]);
            let err = (&a - &flipped).mapv(|v| v * v).sum().sqrt() / a.mapv(|v| v * v).sum().sqrt();
            assert!(err < 1e-3, "theta {theta}: {err}");
        }
    }

    #[test]
    fn psf_zero_is_identity() {
        let mut t = Array2::from_elem((8, 8), 1.0);
        t[[3, 4]] = 0.2;
        let img = TransmissionImage { pixel_pitch: 0.05, angle: 0.0, transmission: t, pathlen: None };
        assert_eq!(apply_psf(&img, 0.0).unwrap(), img);
        assert!(apply_psf(&img, -1.0).is_err());
    }

    #[test]
    fn psf_preserves_mean_with_unit_border() {
        let pitch: f64 = 0.02;
        let fwhm = 0.3;
        let sigma_px: f64 = fwhm / 2.354_820_045 / pitch;
        let border = (3.5 * sigma_px).ceil() as usize;
        let n = 40 + 2 * border;
        let t = Array2::from_shape_fn((n, n), |(r, c)| {
            if r >= border && r < n - border && c >= border && c < n - border {
                0.3 + 0.6 * (((r * 7 + c * 3) % 11) as f64 / 11.0)
            } else {
                1.0
            }
        });
        let img = TransmissionImage { pixel_pitch: pitch, angle: 0.0, transmission: t, pathlen: None };
        let out = apply_psf(&img, fwhm).unwrap();
        let before = img.transmission.mean().unwrap();
        let after = out.transmission.mean().unwrap();
        assert!((before - after).abs() < 1e-6, "{before} vs {after}");
    }

    #[test]
    fn psf_edge_width_matches_gaussian() {
        let pitch = 0.005;
        let fwhm = 0.3;
        let n = 400;
        let t = Array2::from_shape_fn((4, n), |(_, c)| if c < n / 2 { 0.0 } else { 1.0 });
        let img = TransmissionImage { pixel_pitch: pitch, angle: 0.0, transmission: t, pathlen: None };
        let out = apply_psf(&img, fwhm).unwrap();
        let row = out.transmission.row(1);
        let crossing = |level: f64| {
            let c = (0..n - 1).find(|&c| row[c] < level && row[c + 1] >= level).unwrap();
            c as f64 + (level - row[c]) / (row[c + 1] - row[c])
        };
        let width = (crossing(0.9) - crossing(0.1)) * pitch;
        // 10-90 % rise of a Gaussian edge: 2·1.2816σ = 1.0884·FWHM
        let expected = fwhm * 1.0884;
        assert!((width - expected).abs() / expected < 0.05, "{width} vs {expected}");
    }
}
