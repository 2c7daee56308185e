//! Rotation-axis (center of rotation) estimation.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};

use crate::error::{QuoptError, Result};

use super::ProjectionSet;

/// Minimum angular span accepted by [`estimate_cor`].
pub const MIN_SPAN_DEG: f64 = 170.0;

/// Column offset of the rotation axis from the detector center, in pixels.
///
/// When the set contains opposed pairs (angles π apart) each pair is
/// registered against its mirror image and the offsets averaged. Otherwise
/// (the usual half-turn case) the per-angle center of mass is fitted with
/// `a + b·cos θ + c·sin θ`, whose constant term is the axis column.
pub fn estimate_cor(proj: &ProjectionSet) -> Result<f64> {
    let angles = &proj.angles;
    if angles.len() < 3 {
        return Err(QuoptError::InsufficientAngularRange { span_deg: 0.0, needed_deg: MIN_SPAN_DEG });
    }
    let lo = angles.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span_deg = (hi - lo).to_degrees();
    if span_deg < MIN_SPAN_DEG - 1e-9 {
        return Err(QuoptError::InsufficientAngularRange { span_deg, needed_deg: MIN_SPAN_DEG });
    }
    let profiles: Vec<Array1<f64>> = proj.images.iter().map(|img| img.sum_axis(Axis(0))).collect();
    let masses: Vec<f64> = profiles.iter().map(|p| p.sum()).collect();
    let peak = masses.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) || masses.iter().any(|m| *m <= 1e-9 * peak) {
        return Err(QuoptError::CorUndetermined("projections carry no opacity".into()));
    }

    let pairs = opposed_pairs(angles);
    if pairs.is_empty() {
        sinusoid_fit(angles, &profiles, &masses)
    } else {
        let offsets = pairs
            .iter()
            .map(|&(a, b)| mirror_registration(&proj.images[a], &proj.images[b]))
            .collect::<Result<Vec<_>>>()?;
        Ok(offsets.iter().sum::<f64>() / offsets.len() as f64)
    }
}

/// Index pairs whose angles differ by π to within a tenth of the smallest step.
fn opposed_pairs(angles: &[f64]) -> Vec<(usize, usize)> {
    let mut steps: Vec<f64> = angles.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    steps.sort_by(f64::total_cmp);
    let tol = steps.first().copied().unwrap_or(1.0) * 0.1;
    let mut pairs = Vec::new();
    for (a, ta) in angles.iter().enumerate() {
        if let Some(b) = angles.iter().position(|tb| ((tb - ta) - PI).abs() < tol) {
            pairs.push((a, b));
        }
    }
    pairs
}

fn sinusoid_fit(angles: &[f64], profiles: &[Array1<f64>], masses: &[f64]) -> Result<f64> {
    let cols = profiles[0].len();
    // Normal equations of least squares in (1, cos θ, sin θ).
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for ((theta, prof), mass) in angles.iter().zip(profiles).zip(masses) {
        let centroid = prof.iter().enumerate().map(|(c, v)| c as f64 * v).sum::<f64>() / mass;
        let basis = [1.0, theta.cos(), theta.sin()];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += basis[r] * basis[c];
            }
            atb[r] += basis[r] * centroid;
        }
    }
    let axis = solve3(ata, atb)
        .ok_or_else(|| QuoptError::CorUndetermined("singular center-of-mass fit".into()))?[0];
    Ok(axis - (cols as f64 - 1.0) / 2.0)
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Axis offset from a projection and its opposite: the opposite, flipped
/// left-right, equals the first shifted by twice the offset. The integer
/// shift minimizing the squared difference is refined by a parabola.
fn mirror_registration(first: &Array2<f64>, opposite: &Array2<f64>) -> Result<f64> {
    let cols = first.ncols() as isize;
    let flipped = opposite.slice(ndarray::s![.., ..;-1]);
    let cost = |shift: isize| -> f64 {
        let mut sum = 0.0;
        for (a, b) in first.rows().into_iter().zip(flipped.rows()) {
            for c in 0..cols {
                let src = c - shift;
                let bv = if (0..cols).contains(&src) { b[src as usize] } else { 0.0 };
                sum += (a[c as usize] - bv).powi(2);
            }
        }
        sum
    };
    let range = cols / 2;
    let costs: Vec<f64> = (-range..=range).map(cost).collect();
    let best = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| QuoptError::CorUndetermined("empty detector".into()))?;
    let mut shift = best as f64 - range as f64;
    if best > 0 && best + 1 < costs.len() {
        let (l, m, r) = (costs[best - 1], costs[best], costs[best + 1]);
        let denom = l - 2.0 * m + r;
        if denom > 0.0 {
            shift += 0.5 * (l - r) / denom;
        }
    }
    Ok(shift / 2.0)
}
