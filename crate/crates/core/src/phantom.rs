//! Voxel phantoms built from analytic shapes.
//!
//! Grids are centered on the rotation axis: voxel `(i, j, k)` has its center at
//! `x = (i - (nx-1)/2)·pitch`, likewise for `y` and `z`, with `z` the vertical
//! rotation axis. Arrays are stored `[k][j][i]` so that `x` varies fastest.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use ndarray::{Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{QuoptError, Result};

/// Margin, in voxels, between the phantom support and the inscribed cylinder.
pub const SUPPORT_MARGIN_VOXELS: f64 = 2.0;

/// Subsamples per axis used when rasterizing.
const SUPERSAMPLE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Isotropic voxel pitch in mm.
    pub pitch: f64,
}

impl GridSpec {
    pub fn cube(n: usize, pitch: f64) -> Self {
        GridSpec { nx: n, ny: n, nz: n, pitch }
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(QuoptError::InvalidParameter("grid dimensions must be positive".into()));
        }
        if !(self.pitch > 0.0) || !self.pitch.is_finite() {
            return Err(QuoptError::InvalidParameter(format!("pitch must be > 0, got {}", self.pitch)));
        }
        Ok(())
    }

    /// Radius (mm) of the cylinder that all support must lie strictly inside.
    pub fn support_radius(&self) -> f64 {
        (self.nx.min(self.ny) as f64 / 2.0 - SUPPORT_MARGIN_VOXELS) * self.pitch
    }

    /// Half-height (mm) of the grid along z.
    pub fn half_height(&self) -> f64 {
        self.nz as f64 * self.pitch / 2.0
    }

    #[inline]
    pub fn x(&self, i: f64) -> f64 {
        (i - (self.nx as f64 - 1.0) / 2.0) * self.pitch
    }

    #[inline]
    pub fn y(&self, j: f64) -> f64 {
        (j - (self.ny as f64 - 1.0) / 2.0) * self.pitch
    }

    #[inline]
    pub fn z(&self, k: f64) -> f64 {
        (k - (self.nz as f64 - 1.0) / 2.0) * self.pitch
    }
}

/// A 3D attenuation map in mm⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    grid: GridSpec,
    mu: Array3<f64>,
}

impl Phantom {
    /// Wraps a `[nz, ny, nx]` attenuation array, checking every invariant.
    pub fn new(pitch: f64, mu: Array3<f64>) -> Result<Self> {
        let (nz, ny, nx) = mu.dim();
        let grid = GridSpec { nx, ny, nz, pitch };
        grid.validate()?;
        if let Some(bad) = mu.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(QuoptError::InvalidParameter(format!(
                "attenuation must be finite and non-negative, found {bad}"
            )));
        }
        let limit = grid.support_radius();
        for ((_, j, i), v) in mu.indexed_iter() {
            if *v > 0.0 {
                let r = grid.x(i as f64).hypot(grid.y(j as f64));
                if r >= limit {
                    return Err(QuoptError::ShapeOutOfBounds(format!(
                        "voxel ({i}, {j}) at radius {r:.4} mm outside support radius {limit:.4} mm"
                    )));
                }
            }
        }
        Ok(Phantom { grid, mu })
    }

    pub fn zeros(grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        Ok(Phantom { grid, mu: Array3::zeros((grid.nz, grid.ny, grid.nx)) })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn pitch(&self) -> f64 {
        self.grid.pitch
    }

    /// `[nz, ny, nx]` attenuation values.
    pub fn mu(&self) -> &Array3<f64> {
        &self.mu
    }

    pub fn into_mu(self) -> Array3<f64> {
        self.mu
    }

    /// The `[ny, nx]` slice at height index `k`.
    pub fn slice(&self, k: usize) -> ArrayView2<'_, f64> {
        self.mu.index_axis(Axis(0), k)
    }

    pub fn nonzero_count(&self) -> usize {
        self.mu.iter().filter(|v| **v > 0.0).count()
    }

    /// Number of 6-connected components of the non-zero support.
    pub fn component_count(&self) -> usize {
        let (nz, ny, nx) = self.mu.dim();
        let mut seen = Array3::<bool>::from_elem((nz, ny, nx), false);
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in self.mu.indexed_iter().filter(|(_, v)| **v > 0.0).map(|(idx, _)| idx) {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some((k, j, i)) = queue.pop_front() {
                let neighbours = [
                    (k.wrapping_sub(1), j, i),
                    (k + 1, j, i),
                    (k, j.wrapping_sub(1), i),
                    (k, j + 1, i),
                    (k, j, i.wrapping_sub(1)),
                    (k, j, i + 1),
                ];
                for n in neighbours {
                    if n.0 < nz && n.1 < ny && n.2 < nx && !seen[n] && self.mu[n] > 0.0 {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        components
    }
}

/// Geometry of an analytic shape; all lengths in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Flat-capped cylinder between two end points.
    Cylinder {
        start: [f64; 3],
        end: [f64; 3],
        radius: f64,
    },
    /// Wire of circular cross-section wound on a helix with vertical axis.
    HelixWire {
        /// (x, y) of the helix axis.
        axis: [f64; 2],
        z_start: f64,
        helix_radius: f64,
        /// Rise per turn.
        helix_pitch: f64,
        wire_radius: f64,
        turns: f64,
        /// Azimuth of the wire at `z_start`.
        phase: f64,
    },
    /// Horizontal disk of finite thickness.
    DiskSlab {
        center: [f64; 3],
        radius: f64,
        half_thickness: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticShape {
    pub kind: ShapeKind,
    /// Attenuation inside the shape, mm⁻¹.
    pub mu0: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn rotate_xy(p: [f64; 2], alpha: f64) -> [f64; 2] {
    let (s, c) = alpha.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

impl AnalyticShape {
    pub fn sphere(center: [f64; 3], radius: f64, mu0: f64) -> Self {
        AnalyticShape { kind: ShapeKind::Sphere { center, radius }, mu0 }
    }

    pub fn cylinder(start: [f64; 3], end: [f64; 3], radius: f64, mu0: f64) -> Self {
        AnalyticShape { kind: ShapeKind::Cylinder { start, end, radius }, mu0 }
    }

    pub fn disk_slab(center: [f64; 3], radius: f64, half_thickness: f64, mu0: f64) -> Self {
        AnalyticShape { kind: ShapeKind::DiskSlab { center, radius, half_thickness }, mu0 }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(QuoptError::InvalidParameter(format!("{name} must be > 0, got {v}")))
            }
        };
        if !(self.mu0 >= 0.0) || !self.mu0.is_finite() {
            return Err(QuoptError::InvalidParameter(format!("mu0 must be >= 0, got {}", self.mu0)));
        }
        match self.kind {
            ShapeKind::Sphere { radius, .. } => positive("radius", radius),
            ShapeKind::Cylinder { start, end, radius } => {
                positive("radius", radius)?;
                positive("cylinder length", dot(sub(end, start), sub(end, start)).sqrt())
            }
            ShapeKind::HelixWire { helix_radius, helix_pitch, wire_radius, turns, .. } => {
                positive("helix radius", helix_radius)?;
                positive("helix pitch", helix_pitch)?;
                positive("wire radius", wire_radius)?;
                positive("turns", turns)
            }
            ShapeKind::DiskSlab { radius, half_thickness, .. } => {
                positive("radius", radius)?;
                positive("half thickness", half_thickness)
            }
        }
    }

    /// Whether the point `p` (mm) lies inside the shape.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self.kind {
            ShapeKind::Sphere { center, radius } => {
                let d = sub(p, center);
                dot(d, d) <= radius * radius
            }
            ShapeKind::Cylinder { start, end, radius } => {
                let axis = sub(end, start);
                let len2 = dot(axis, axis);
                let d = sub(p, start);
                let t = dot(d, axis);
                if t < 0.0 || t > len2 {
                    return false;
                }
                dot(d, d) - t * t / len2 <= radius * radius
            }
            ShapeKind::DiskSlab { center, radius, half_thickness } => {
                let d = sub(p, center);
                d[2].abs() <= half_thickness && d[0] * d[0] + d[1] * d[1] <= radius * radius
            }
            ShapeKind::HelixWire {
                axis,
                z_start,
                helix_radius,
                helix_pitch,
                wire_radius,
                turns,
                phase,
            } => {
                let (dx, dy) = (p[0] - axis[0], p[1] - axis[1]);
                let rho = dx.hypot(dy);
                if (rho - helix_radius).abs() > wire_radius {
                    return false;
                }
                let z_end = z_start + helix_pitch * turns;
                if p[2] < z_start - wire_radius || p[2] > z_end + wire_radius {
                    return false;
                }
                helix_distance2(
                    p,
                    axis,
                    z_start,
                    helix_radius,
                    helix_pitch,
                    turns,
                    phase,
                ) <= wire_radius * wire_radius
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)` in mm.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self.kind {
            ShapeKind::Sphere { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
            ShapeKind::Cylinder { start, end, radius } => {
                let d = [end[0] - start[0], end[1] - start[1], end[2] - start[2]];
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for a in 0..3 {
                    // flat caps reach r·sin(angle between axis and coordinate axis)
                    let reach = if len > 0.0 { radius * (1.0 - (d[a] / len).powi(2)).max(0.0).sqrt() } else { radius };
                    lo[a] = start[a].min(end[a]) - reach;
                    hi[a] = start[a].max(end[a]) + reach;
                }
                (lo, hi)
            }
            ShapeKind::DiskSlab { center, radius, half_thickness } => (
                [center[0] - radius, center[1] - radius, center[2] - half_thickness],
                [center[0] + radius, center[1] + radius, center[2] + half_thickness],
            ),
            ShapeKind::HelixWire { axis, z_start, helix_radius, helix_pitch, wire_radius, turns, .. } => {
                let r = helix_radius + wire_radius;
                (
                    [axis[0] - r, axis[1] - r, z_start - wire_radius],
                    [axis[0] + r, axis[1] + r, z_start + helix_pitch * turns + wire_radius],
                )
            }
        }
    }

    /// Largest distance (mm) from the z axis reached by the shape.
    pub fn radial_extent(&self) -> f64 {
        match self.kind {
            ShapeKind::Sphere { center, radius } => center[0].hypot(center[1]) + radius,
            ShapeKind::Cylinder { start, end, radius } => {
                start[0].hypot(start[1]).max(end[0].hypot(end[1])) + radius
            }
            ShapeKind::DiskSlab { center, radius, .. } => center[0].hypot(center[1]) + radius,
            ShapeKind::HelixWire { axis, helix_radius, wire_radius, .. } => {
                axis[0].hypot(axis[1]) + helix_radius + wire_radius
            }
        }
    }

    /// The same shape rotated by `alpha` radians (counter-clockwise seen from
    /// +z) about the z axis.
    pub fn rotated_z(&self, alpha: f64) -> Self {
        let rot3 = |p: [f64; 3]| {
            let [x, y] = rotate_xy([p[0], p[1]], alpha);
            [x, y, p[2]]
        };
        let kind = match self.kind {
            ShapeKind::Sphere { center, radius } => ShapeKind::Sphere { center: rot3(center), radius },
            ShapeKind::Cylinder { start, end, radius } => {
                ShapeKind::Cylinder { start: rot3(start), end: rot3(end), radius }
            }
            ShapeKind::DiskSlab { center, radius, half_thickness } => {
                ShapeKind::DiskSlab { center: rot3(center), radius, half_thickness }
            }
            ShapeKind::HelixWire {
                axis,
                z_start,
                helix_radius,
                helix_pitch,
                wire_radius,
                turns,
                phase,
            } => ShapeKind::HelixWire {
                axis: rotate_xy(axis, alpha),
                z_start,
                helix_radius,
                helix_pitch,
                wire_radius,
                turns,
                phase: phase + alpha,
            },
        };
        AnalyticShape { kind, mu0: self.mu0 }
    }

    fn check_inside(&self, grid: &GridSpec) -> Result<()> {
        self.validate()?;
        let limit = grid.support_radius();
        let reach = self.radial_extent();
        if reach >= limit {
            return Err(QuoptError::ShapeOutOfBounds(format!(
                "{:?} reaches radius {reach:.4} mm, support limit is {limit:.4} mm",
                self.kind
            )));
        }
        let (lo, hi) = self.bounds();
        let half = grid.half_height();
        if lo[2] < -half || hi[2] > half {
            return Err(QuoptError::ShapeOutOfBounds(format!(
                "{:?} spans z [{:.4}, {:.4}] mm, grid spans ±{half:.4} mm",
                self.kind, lo[2], hi[2]
            )));
        }
        Ok(())
    }
}

/// Squared distance from `p` to the helix centerline.
fn helix_distance2(
    p: [f64; 3],
    axis: [f64; 2],
    z_start: f64,
    radius: f64,
    rise: f64,
    turns: f64,
    phase: f64,
) -> f64 {
    let curve = |t: f64| {
        let a = TAU * t + phase;
        [axis[0] + radius * a.cos(), axis[1] + radius * a.sin(), z_start + rise * t]
    };
    let dist2 = |t: f64| {
        let d = sub(p, curve(t));
        dot(d, d)
    };
    // Parameter of the nearest point in each turn shares the point's azimuth.
    let azimuth = (p[1] - axis[1]).atan2(p[0] - axis[0]);
    let base = (azimuth - phase) / TAU;
    let t_height = (p[2] - z_start) / rise;
    let m0 = (t_height - base).round();

    let mut best = dist2(0.0).min(dist2(turns));
    for m in [m0 - 1.0, m0, m0 + 1.0] {
        let mut t = (base + m).clamp(0.0, turns);
        for _ in 0..4 {
            let a = TAU * t + phase;
            let (s, c) = a.sin_cos();
            let d = sub(p, curve(t));
            let dc = [-TAU * radius * s, TAU * radius * c, rise];
            let ddc = [-TAU * TAU * radius * c, -TAU * TAU * radius * s, 0.0];
            let g1 = -2.0 * dot(d, dc);
            let g2 = 2.0 * (dot(dc, dc) - dot(d, ddc));
            if g2 <= 0.0 {
                break;
            }
            t = (t - g1 / g2).clamp(0.0, turns);
        }
        best = best.min(dist2(t));
    }
    best
}

/// Index range of voxels whose centers can intersect `[lo, hi]` along one axis.
fn voxel_range(lo: f64, hi: f64, n: usize, pitch: f64) -> std::ops::Range<usize> {
    let offset = (n as f64 - 1.0) / 2.0;
    let first = (lo / pitch + offset - 0.5).floor().max(0.0) as usize;
    let last = ((hi / pitch + offset + 0.5).ceil().max(-1.0) + 1.0) as usize;
    first.min(n)..last.min(n)
}

/// Subsample offsets within a voxel, in units of pitch.
fn subsample_offsets() -> [f64; SUPERSAMPLE] {
    let mut out = [0.0; SUPERSAMPLE];
    for (s, o) in out.iter_mut().enumerate() {
        *o = (s as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
    }
    out
}

/// Visits every voxel of slice `k` inside each shape's bounding box.
fn for_each_candidate<F>(grid: &GridSpec, k: usize, shapes: &[AnalyticShape], mut visit: F)
where
    F: FnMut(usize, usize, &AnalyticShape),
{
    let zc = grid.z(k as f64);
    for shape in shapes {
        let (lo, hi) = shape.bounds();
        if zc + grid.pitch < lo[2] || zc - grid.pitch > hi[2] {
            continue;
        }
        for j in voxel_range(lo[1], hi[1], grid.ny, grid.pitch) {
            for i in voxel_range(lo[0], hi[0], grid.nx, grid.pitch) {
                visit(j, i, shape);
            }
        }
    }
}

fn covered_subsamples(grid: &GridSpec, k: usize, j: usize, i: usize, inside: &dyn Fn([f64; 3]) -> bool) -> usize {
    let offs = subsample_offsets();
    let (xc, yc, zc) = (grid.x(i as f64), grid.y(j as f64), grid.z(k as f64));
    let mut count = 0;
    for dz in offs {
        for dy in offs {
            for dx in offs {
                let p = [xc + dx * grid.pitch, yc + dy * grid.pitch, zc + dz * grid.pitch];
                if inside(p) {
                    count += 1;
                }
            }
        }
    }
    count
}

fn check_shapes(shapes: &[AnalyticShape], grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if shapes.is_empty() {
        return Err(QuoptError::InvalidParameter("shape list is empty".into()));
    }
    shapes.iter().try_for_each(|s| s.check_inside(grid))
}

/// Rasterizes shapes additively: each voxel receives `mu0` times the fraction
/// of its 2×2×2 subsamples covered, summed over shapes.
pub fn rasterize(shapes: &[AnalyticShape], grid: GridSpec) -> Result<Phantom> {
    check_shapes(shapes, &grid)?;
    let total = (SUPERSAMPLE * SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut mu = Array3::<f64>::zeros((grid.nz, grid.ny, grid.nx));
    mu.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(k, mut slice)| {
        for_each_candidate(&grid, k, shapes, |j, i, shape| {
            let n = covered_subsamples(&grid, k, j, i, &|p| shape.contains(p));
            if n > 0 {
                slice[[j, i]] += shape.mu0 * n as f64 / total;
            }
        });
    });
    Phantom::new(grid.pitch, mu)
}

/// Rasterizes the union of shapes as a binary phantom: a voxel is `mu0` when
/// at least half of its subsamples fall inside any shape, otherwise 0.
pub fn rasterize_union(shapes: &[AnalyticShape], grid: GridSpec, mu0: f64) -> Result<Phantom> {
    check_shapes(shapes, &grid)?;
    if !(mu0 > 0.0) {
        return Err(QuoptError::InvalidParameter(format!("mu0 must be > 0, got {mu0}")));
    }
    let half = SUPERSAMPLE * SUPERSAMPLE * SUPERSAMPLE / 2;
    let mut mu = Array3::<f64>::zeros((grid.nz, grid.ny, grid.nx));
    mu.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(k, mut slice)| {
        let mut candidates = Vec::new();
        for_each_candidate(&grid, k, shapes, |j, i, _| candidates.push((j, i)));
        candidates.sort_unstable();
        candidates.dedup();
        for (j, i) in candidates {
            let any = |p: [f64; 3]| shapes.iter().any(|s| s.contains(p));
            if covered_subsamples(&grid, k, j, i, &any) >= half {
                slice[[j, i]] = mu0;
            }
        }
    });
    Phantom::new(grid.pitch, mu)
}

/// Parameters of the twisted-wire figurine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigurineParams {
    pub height_mm: f64,
    pub wire_radius_mm: f64,
    /// Attenuation of the wire, mm⁻¹.
    pub mu0: f64,
}

impl Default for FigurineParams {
    fn default() -> Self {
        FigurineParams { height_mm: 5.0, wire_radius_mm: 0.15, mu0: 4.0 }
    }
}

/// Wire segments of a stick figure: two legs, a double-helix torso, shoulders,
/// arms, a neck and a coiled head, centered on the rotation axis.
pub fn figurine_shapes(params: &FigurineParams) -> Vec<AnalyticShape> {
    let h = params.height_mm;
    let w = params.wire_radius_mm;
    let mu0 = params.mu0;
    let torso_r = 0.08 * h;
    let (hip_z, shoulder_z) = (-0.15 * h, 0.2 * h);
    let head_r = 0.07 * h;
    let (neck_top, head_top) = (0.3 * h, 0.45 * h - w);

    let cyl = |a: [f64; 3], b: [f64; 3]| AnalyticShape::cylinder(a, b, w, mu0);
    let joint = |c: [f64; 3]| AnalyticShape::sphere(c, w, mu0);
    let strand = |phase: f64| AnalyticShape {
        kind: ShapeKind::HelixWire {
            axis: [0.0, 0.0],
            z_start: hip_z,
            helix_radius: torso_r,
            helix_pitch: (shoulder_z - hip_z) / 2.0,
            wire_radius: w,
            turns: 2.0,
            phase,
        },
        mu0,
    };

    let mut shapes = vec![
        // legs
        cyl([-0.12 * h, 0.0, -0.5 * h + w], [-torso_r, 0.0, hip_z]),
        cyl([0.12 * h, 0.0, -0.5 * h + w], [torso_r, 0.0, hip_z]),
        // torso
        strand(0.0),
        strand(std::f64::consts::PI),
        // shoulders and arms
        cyl([-torso_r, 0.0, shoulder_z], [torso_r, 0.0, shoulder_z]),
        cyl([-torso_r, 0.0, shoulder_z], [-0.3 * h, 0.05 * h, -0.02 * h]),
        cyl([torso_r, 0.0, shoulder_z], [0.3 * h, -0.05 * h, -0.02 * h]),
        // neck and head
        cyl([0.0, 0.0, shoulder_z], [0.0, 0.0, neck_top]),
        cyl([0.0, 0.0, neck_top], [head_r, 0.0, neck_top]),
        AnalyticShape {
            kind: ShapeKind::HelixWire {
                axis: [0.0, 0.0],
                z_start: neck_top,
                helix_radius: head_r,
                helix_pitch: (head_top - neck_top) / 1.5,
                wire_radius: w,
                turns: 1.5,
                phase: 0.0,
            },
            mu0,
        },
    ];
    for c in [
        [-torso_r, 0.0, hip_z],
        [torso_r, 0.0, hip_z],
        [-torso_r, 0.0, shoulder_z],
        [torso_r, 0.0, shoulder_z],
        [0.0, 0.0, shoulder_z],
        [0.0, 0.0, neck_top],
        [head_r, 0.0, neck_top],
    ] {
        shapes.push(joint(c));
    }
    shapes
}

/// Binary twisted-wire figurine phantom.
pub fn wire_figurine(params: &FigurineParams, grid: GridSpec) -> Result<Phantom> {
    grid.validate()?;
    if !(params.height_mm > 0.0) {
        return Err(QuoptError::InvalidParameter(format!("height must be > 0, got {}", params.height_mm)));
    }
    if params.wire_radius_mm < 2.0 * grid.pitch {
        return Err(QuoptError::InvalidParameter(format!(
            "wire radius {} mm below two voxels ({} mm)",
            params.wire_radius_mm,
            2.0 * grid.pitch
        )));
    }
    rasterize_union(&figurine_shapes(params), grid, params.mu0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_center_voxel_fully_covered() {
        let grid = GridSpec::cube(41, 0.1);
        let p = rasterize(&[AnalyticShape::sphere([0.0; 3], 1.0, 1.0)], grid).unwrap();
        assert_eq!(p.mu()[[20, 20, 20]], 1.0);
        assert_eq!(p.mu()[[0, 0, 0]], 0.0);
        assert_eq!(p.mu()[[20, 20, 2]], 0.0);
    }

    #[test]
    fn sphere_volume_matches_analytic() {
        for pitch in [0.1, 0.07] {
            let n = (2.6 / pitch) as usize + 6;
            let grid = GridSpec::cube(n, pitch);
            let p = rasterize(&[AnalyticShape::sphere([0.013, -0.021, 0.007], 1.0, 1.0)], grid).unwrap();
            let volume = p.mu().sum() * pitch.powi(3);
            let exact = 4.0 / 3.0 * PI;
            assert!((volume - exact).abs() / exact < 0.01, "pitch {pitch}: {volume} vs {exact}");
        }
    }

    #[test]
    fn disjoint_shapes_rasterize_linearly() {
        let grid = GridSpec::cube(48, 0.1);
        let a = AnalyticShape::sphere([-0.8, 0.3, 0.0], 0.6, 1.5);
        let b = AnalyticShape::cylinder([0.6, -0.5, -1.0], [0.9, 0.2, 1.2], 0.3, 0.7);
        let pa = rasterize(&[a], grid).unwrap();
        let pb = rasterize(&[b], grid).unwrap();
        let pab = rasterize(&[a, b], grid).unwrap();
        let diff = (pab.mu() - &(pa.mu() + pb.mu())).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(diff < 1e-12);
    }

    #[test]
    fn shape_outside_support_rejected() {
        let grid = GridSpec::cube(32, 0.1);
        // support radius = (16 - 2) * 0.1 = 1.4 mm
        let err = rasterize(&[AnalyticShape::sphere([1.0, 0.0, 0.0], 0.5, 1.0)], grid).unwrap_err();
        assert!(matches!(err, QuoptError::ShapeOutOfBounds(_)));
        let err = rasterize(&[AnalyticShape::sphere([0.0, 0.0, 1.5], 0.3, 1.0)], grid).unwrap_err();
        assert!(matches!(err, QuoptError::ShapeOutOfBounds(_)));
        assert!(rasterize(&[], grid).is_err());
    }

    #[test]
    fn phantom_new_enforces_invariants() {
        let mut mu = Array3::<f64>::zeros((4, 16, 16));
        mu[[1, 8, 8]] = 1.0;
        assert!(Phantom::new(0.1, mu.clone()).is_ok());
        assert!(Phantom::new(0.0, mu.clone()).is_err());
        mu[[1, 8, 8]] = -1.0;
        assert!(Phantom::new(0.1, mu.clone()).is_err());
        mu[[1, 8, 8]] = 0.0;
        mu[[1, 0, 8]] = 1.0;
        assert!(matches!(Phantom::new(0.1, mu), Err(QuoptError::ShapeOutOfBounds(_))));
    }

    #[test]
    fn helix_contains_points_on_centerline() {
        let helix = AnalyticShape {
            kind: ShapeKind::HelixWire {
                axis: [0.1, -0.2],
                z_start: -1.0,
                helix_radius: 0.5,
                helix_pitch: 0.8,
                wire_radius: 0.1,
                turns: 2.5,
                phase: 0.3,
            },
            mu0: 1.0,
        };
        for t in [0.0, 0.4, 1.0, 1.77, 2.5] {
            let a = TAU * t + 0.3;
            let c = [0.1 + 0.5 * a.cos(), -0.2 + 0.5 * a.sin(), -1.0 + 0.8 * t];
            assert!(helix.contains(c));
            // just inside / outside the wire radially
            let outward = |r: f64| [0.1 + r * a.cos(), -0.2 + r * a.sin(), c[2]];
            assert!(helix.contains(outward(0.59)));
            assert!(!helix.contains(outward(0.61)));
        }
        // between turns, far from the wire
        let a = 0.3f64;
        assert!(!helix.contains([0.1 + 0.5 * a.cos(), -0.2 + 0.5 * a.sin(), -0.6]));
    }

    #[test]
    fn rotated_shapes_keep_containment() {
        let shapes = figurine_shapes(&FigurineParams::default());
        let alpha = 0.7;
        for s in &shapes {
            let r = s.rotated_z(alpha);
            let (lo, hi) = s.bounds();
            for f in [0.25, 0.5, 0.75] {
                let p = [
                    lo[0] + f * (hi[0] - lo[0]),
                    lo[1] + (1.0 - f) * (hi[1] - lo[1]),
                    lo[2] + f * (hi[2] - lo[2]),
                ];
                let q = rotate_xy([p[0], p[1]], alpha);
                assert_eq!(s.contains(p), r.contains([q[0], q[1], p[2]]));
            }
        }
    }

    #[test]
    fn figurine_is_connected_binary_and_sparse() {
        let grid = GridSpec::cube(128, 0.05);
        let params = FigurineParams::default();
        let p = wire_figurine(&params, grid).unwrap();
        assert!(p.mu().iter().all(|v| *v == 0.0 || *v == params.mu0));
        let frac = p.nonzero_count() as f64 / (128.0 * 128.0 * 128.0);
        assert!(frac > 0.001 && frac < 0.05, "fraction {frac}");
        assert_eq!(p.component_count(), 1);
    }

    #[test]
    fn figurine_rejects_thin_wire() {
        let grid = GridSpec::cube(64, 0.1);
        let params = FigurineParams { wire_radius_mm: 0.15, ..Default::default() };
        assert!(matches!(wire_figurine(&params, grid), Err(QuoptError::InvalidParameter(_))));
    }
}
