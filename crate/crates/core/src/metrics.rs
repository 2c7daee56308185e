//! Reconstruction quality metrics.

use ndarray::{Array3, Zip};

/// Cylindrical field-of-view mask for a `[nz, n, n]` volume: voxels whose
/// center lies within `radius_px` of the rotation axis.
pub fn cylinder_mask(dim: (usize, usize, usize), radius_px: f64) -> Array3<bool> {
    let (_, ny, nx) = dim;
    let (cy, cx) = ((ny as f64 - 1.0) / 2.0, (nx as f64 - 1.0) / 2.0);
    Array3::from_shape_fn(dim, |(_, j, i)| (i as f64 - cx).hypot(j as f64 - cy) <= radius_px)
}

/// RMSE over masked voxels divided by the truth's dynamic range there.
pub fn normalized_rmse(recon: &Array3<f64>, truth: &Array3<f64>, mask: &Array3<bool>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    Zip::from(recon).and(truth).and(mask).for_each(|r, t, m| {
        if *m {
            sum += (r - t).powi(2);
            n += 1;
            lo = lo.min(*t);
            hi = hi.max(*t);
        }
    });
    if n == 0 || !(hi > lo) {
        return f64::NAN;
    }
    (sum / n as f64).sqrt() / (hi - lo)
}

/// Otsu's threshold over a 256-bin histogram of `values`.
pub fn otsu_threshold<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().copied().filter(|v| v.is_finite()).collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(hi > lo) {
        return lo;
    }
    const BINS: usize = 256;
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0usize; BINS];
    for v in &values {
        hist[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let centers: Vec<f64> = (0..BINS).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let grand: f64 = hist.iter().zip(&centers).map(|(h, c)| *h as f64 * c).sum();

    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_bin) = (f64::NEG_INFINITY, 0);
    for b in 0..BINS - 1 {
        w0 += hist[b] as f64;
        sum0 += hist[b] as f64 * centers[b];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (grand - sum0) / w1);
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_bin = b;
        }
    }
    lo + (best_bin + 1) as f64 * width
}

/// Intersection over union of two masks, restricted to `within`.
pub fn iou(a: &Array3<bool>, b: &Array3<bool>, within: &Array3<bool>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    Zip::from(a).and(b).and(within).for_each(|x, y, w| {
        if *w {
            inter += (*x && *y) as usize;
            union += (*x || *y) as usize;
        }
    });
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Index of the largest value.
pub fn argmax(v: &Array3<f64>) -> (usize, usize, usize) {
    v.indexed_iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or((0, 0, 0))
}

/// Distance in voxels between the maxima of two volumes.
pub fn peak_position_error(recon: &Array3<f64>, truth: &Array3<f64>) -> f64 {
    let (a, b) = (argmax(recon), argmax(truth));
    let d = |x: usize, y: usize| x as f64 - y as f64;
    (d(a.0, b.0).powi(2) + d(a.1, b.1).powi(2) + d(a.2, b.2).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nrmse_of_identical_volumes_is_zero() {
        let t = Array3::from_shape_fn((2, 4, 4), |(k, j, i)| (k + j + i) as f64);
        let mask = Array3::from_elem(t.dim(), true);
        assert_eq!(normalized_rmse(&t, &t, &mask), 0.0);
        let shifted = t.mapv(|v| v + 0.7);
        // range 0..7
        assert!((normalized_rmse(&shifted, &t, &mask) - 0.7 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn otsu_splits_bimodal_data() {
        let mut v = vec![0.0; 900];
        v.extend(std::iter::repeat_n(1.0, 100));
        v.extend((0..50).map(|i| 0.02 * (i % 3) as f64));
        let t = otsu_threshold(&v);
        assert!(t > 0.04 && t < 1.0, "{t}");
    }

    #[test]
    fn iou_counts() {
        let a = Array3::from_shape_vec((1, 1, 4), vec![true, true, false, false]).unwrap();
        let b = Array3::from_shape_vec((1, 1, 4), vec![true, false, true, false]).unwrap();
        let all = Array3::from_elem((1, 1, 4), true);
        assert!((iou(&a, &b, &all) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a, &all), 1.0);
    }

    #[test]
    fn cylinder_mask_radius() {
        let m = cylinder_mask((1, 5, 5), 1.0);
        assert!(m[[0, 2, 2]] && m[[0, 2, 3]] && !m[[0, 3, 3]] && !m[[0, 0, 0]]);
    }

    #[test]
    fn peak_error() {
        let mut a = Array3::zeros((3, 3, 3));
        let mut b = Array3::zeros((3, 3, 3));
        a[[0, 0, 0]] = 1.0;
        b[[0, 2, 2]] = 1.0;
        assert!((peak_position_error(&a, &b) - 8f64.sqrt()).abs() < 1e-12);
    }
}
