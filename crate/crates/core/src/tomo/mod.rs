//! From visibility images to a reconstructed volume.
//!
//! Visibility is normalized to a transmission estimate, turned into an
//! additive opacity, re-centered on the rotation axis and masked to the field
//! of view. One sinogram per detector row is then reconstructed by filtered
//! back-projection and the slices restacked along z.

mod cor;
mod fbp;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

use crate::demod::VisibilityImage;
use crate::error::{QuoptError, Result};

pub use cor::{estimate_cor, MIN_SPAN_DEG};
pub use fbp::{backproject, fbp as fbp_sinogram, filter_response, filter_sinogram, mask_circle, Filter};

/// Lower clamp of the normalized transmission, relative to the reference.
pub const TRANSMISSION_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpacityMode {
    /// `1 − t`
    Linear,
    /// `−ln t`
    #[default]
    Log,
}

impl fmt::Display for OpacityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpacityMode::Linear => "linear",
            OpacityMode::Log => "log",
        })
    }
}

impl FromStr for OpacityMode {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(OpacityMode::Linear),
            "log" => Ok(OpacityMode::Log),
            _ => Err(QuoptError::InvalidParameter(format!("unknown opacity mode '{s}'"))),
        }
    }
}

/// Visibility of an empty scene.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Scalar(f64),
    PerPixel(Array2<f64>),
}

impl Reference {
    fn at(&self, r: usize, c: usize) -> f64 {
        match self {
            Reference::Scalar(v) => *v,
            Reference::PerPixel(a) => a[[r, c]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    /// Required for log mode; linear mode treats visibility as transmission
    /// when absent.
    pub reference: Option<Reference>,
    pub mode: OpacityMode,
    /// Half-width of the field of view in columns about the center; columns
    /// beyond it are zeroed. `None` keeps the full detector.
    pub fov_radius_px: Option<f64>,
    /// Column offset of the rotation axis; images are shifted by its negative.
    pub cor_offset: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { reference: None, mode: OpacityMode::Log, fov_radius_px: None, cor_offset: 0.0 }
    }
}

/// Opacity images indexed by rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub angles: Vec<f64>,
    /// `[rows, cols]` opacity per angle.
    pub images: Vec<Array2<f64>>,
    pub mode: OpacityMode,
    pub fov_radius_px: Option<f64>,
    pub cor_offset: f64,
    pub pixel_pitch: f64,
}

impl ProjectionSet {
    /// Checks equal image sizes and strictly increasing angles in `[0, 2π)`.
    pub fn new(angles: Vec<f64>, images: Vec<Array2<f64>>, mode: OpacityMode, pixel_pitch: f64) -> Result<Self> {
        if angles.len() != images.len() {
            return Err(QuoptError::GeometryMismatch(format!(
                "{} angles for {} images",
                angles.len(),
                images.len()
            )));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().find(|i| i.dim() != first.dim()) {
                return Err(QuoptError::GeometryMismatch(format!(
                    "image {:?} differs from {:?}",
                    bad.dim(),
                    first.dim()
                )));
            }
        }
        if angles.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QuoptError::InvalidParameter("angles must be strictly increasing".into()));
        }
        if angles.iter().any(|a| !(0.0..std::f64::consts::TAU).contains(a)) {
            return Err(QuoptError::InvalidParameter("angles must lie in [0, 2π)".into()));
        }
        Ok(ProjectionSet { angles, images, mode, fov_radius_px: None, cor_offset: 0.0, pixel_pitch })
    }

    pub fn dim(&self) -> Option<(usize, usize)> {
        self.images.first().map(|i| i.dim())
    }
}

/// Shifts every row so that `out[c] = in[c + offset]`, linear interpolation,
/// zero beyond the edges.
pub fn shift_columns(img: &Array2<f64>, offset: f64) -> Array2<f64> {
    if offset == 0.0 {
        return img.clone();
    }
    let cols = img.ncols();
    let mut out = Array2::zeros(img.dim());
    for (src, mut dst) in img.rows().into_iter().zip(out.rows_mut()) {
        for (c, d) in dst.iter_mut().enumerate() {
            let t = c as f64 + offset;
            let lo = t.floor();
            let w = t - lo;
            let i = lo as isize;
            let at = |k: isize| if (0..cols as isize).contains(&k) { src[k as usize] } else { 0.0 };
            *d = at(i) * (1.0 - w) + at(i + 1) * w;
        }
    }
    out
}

/// Normalizes, converts to opacity, re-centers and masks visibility images.
pub fn preprocess(vis: &[VisibilityImage], opts: &PreprocessOptions) -> Result<ProjectionSet> {
    if opts.mode == OpacityMode::Log && opts.reference.is_none() {
        return Err(QuoptError::MissingReference);
    }
    let reference = opts.reference.clone().unwrap_or(Reference::Scalar(1.0));
    match &reference {
        Reference::Scalar(v) if !(*v > 0.0) => {
            return Err(QuoptError::InvalidParameter(format!("reference must be > 0, got {v}")))
        }
        Reference::PerPixel(a) if a.iter().any(|v| !(*v > 0.0)) => {
            return Err(QuoptError::InvalidParameter("per-pixel reference must be > 0".into()))
        }
        _ => {}
    }
    if let (Reference::PerPixel(a), Some(v)) = (&reference, vis.first()) {
        if a.dim() != v.visibility.dim() {
            return Err(QuoptError::GeometryMismatch(format!(
                "reference {:?} does not match images {:?}",
                a.dim(),
                v.visibility.dim()
            )));
        }
    }
    if !opts.cor_offset.is_finite() {
        return Err(QuoptError::InvalidParameter("COR offset must be finite".into()));
    }

    let images: Vec<Array2<f64>> = vis
        .par_iter()
        .map(|v| {
            let opacity = Array2::from_shape_fn(v.visibility.dim(), |(r, c)| {
                let t = (v.visibility[[r, c]] / reference.at(r, c)).clamp(TRANSMISSION_FLOOR, 1.0);
                match opts.mode {
                    OpacityMode::Linear => 1.0 - t,
                    OpacityMode::Log => -t.ln(),
                }
            });
            let mut shifted = shift_columns(&opacity, opts.cor_offset);
            if let Some(radius) = opts.fov_radius_px {
                let center = (shifted.ncols() as f64 - 1.0) / 2.0;
                for mut col in shifted.columns_mut().into_iter().enumerate().filter_map(|(c, col)| {
                    ((c as f64 - center).abs() > radius).then_some(col)
                }) {
                    col.fill(0.0);
                }
            }
            shifted
        })
        .collect();
    let pitch = vis.first().map(|v| v.pixel_pitch).unwrap_or(1.0);
    let mut set = ProjectionSet::new(vis.iter().map(|v| v.angle).collect(), images, opts.mode, pitch)?;
    set.fov_radius_px = opts.fov_radius_px;
    set.cor_offset = opts.cor_offset;
    Ok(set)
}

/// Angle × column data for one detector row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub row: usize,
    pub angles: Vec<f64>,
    /// `[angles, cols]`
    pub data: Array2<f64>,
}

/// One sinogram per detector row.
pub fn build_sinograms(proj: &ProjectionSet) -> Vec<Sinogram> {
    let Some((rows, cols)) = proj.dim() else {
        return Vec::new();
    };
    (0..rows)
        .map(|r| {
            let mut data = Array2::zeros((proj.angles.len(), cols));
            for (mut dst, img) in data.rows_mut().into_iter().zip(&proj.images) {
                dst.assign(&img.row(r));
            }
            Sinogram { row: r, angles: proj.angles.clone(), data }
        })
        .collect()
}

/// Filtered back-projection of a single sinogram; see [`fbp_sinogram`].
pub fn fbp_slice(sino: &Sinogram, filter: Filter, out_size: usize) -> Result<Array2<f64>> {
    fbp_sinogram(&sino.data, &sino.angles, filter, out_size)
}

/// Reconstructed attenuation with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    /// `[nz, ny, nx]`; slice `k` comes from detector row `k`.
    pub data: Array3<f64>,
    pub pitch: f64,
    pub filter: Filter,
    pub mode: OpacityMode,
    pub cor_offset: f64,
}

impl Volume {
    /// Multiplies every voxel by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.data.mapv_inplace(|v| v * factor);
        self
    }

    /// Units of the voxel values.
    pub fn units(&self) -> &'static str {
        match self.mode {
            OpacityMode::Log => "1/mm",
            OpacityMode::Linear => "opacity/mm",
        }
    }
}

/// Reconstructs every detector row into an `out_size²` slice (default: the
/// detector width), dividing by the pixel pitch so values are per mm.
pub fn reconstruct_volume(proj: &ProjectionSet, filter: Filter, out_size: Option<usize>) -> Result<Volume> {
    let Some((rows, cols)) = proj.dim() else {
        return Err(QuoptError::TooFewAngles(0));
    };
    let size = out_size.unwrap_or(cols);
    let sinograms = build_sinograms(proj);
    let slices = sinograms
        .par_iter()
        .map(|s| fbp_slice(s, filter, size))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Array3::zeros((rows, size, size));
    for (mut dst, slice) in data.axis_iter_mut(Axis(0)).zip(&slices) {
        dst.assign(slice);
    }
    data.mapv_inplace(|v| v / proj.pixel_pitch);
    Ok(Volume { data, pitch: proj.pixel_pitch, filter, mode: proj.mode, cor_offset: proj.cor_offset })
}
