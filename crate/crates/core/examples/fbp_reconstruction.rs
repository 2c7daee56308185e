//! Filtered back-projection of a disk-and-rods slice from its analytic
//! sinogram, with each of the available filters.

use std::f64::consts::PI;

use ndarray::Array2;
use quopt::half_turn_angles;
use quopt::tomo::{fbp_sinogram, Filter};

/// Chord length through a disk of radius `r` centered at (`cx`, `cy`) for
/// the ray at offset `s` and angle `theta`.
fn chord(cx: f64, cy: f64, r: f64, s: f64, theta: f64) -> f64 {
    let d = s - (cx * theta.cos() - cy * theta.sin());
    if d.abs() < r { 2.0 * (r * r - d * d).sqrt() } else { 0.0 }
}

fn main() -> quopt::Result<()> {
    let n = 128;
    let angles = half_turn_angles(180);
    let disks = [(0.0, 0.0, 40.0, 1.0), (15.0, 10.0, 8.0, 1.5), (-18.0, -5.0, 5.0, -0.5)];
    let sino = Array2::from_shape_fn((angles.len(), n), |(a, c)| {
        let s = c as f64 - (n as f64 - 1.0) / 2.0;
        disks.iter().map(|&(x, y, r, mu)| mu * chord(x, y, r, s, angles[a])).sum()
    });

    let probe = |img: &Array2<f64>, x: f64, y: f64| {
        let c = (n as f64 - 1.0) / 2.0;
        img[[(c + y).round() as usize, (c + x).round() as usize]]
    };
    println!("{:<12} {:>9} {:>9} {:>9} {:>9}", "filter", "bg", "insert", "hole", "outside");
    for filter in [Filter::Ramp, Filter::SheppLogan, Filter::Hann] {
        let img = fbp_sinogram(&sino, &angles, filter, n)?;
        println!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            filter.to_string(),
            probe(&img, -10.0, 20.0),
            probe(&img, 15.0, 10.0),
            probe(&img, -18.0, -5.0),
            probe(&img, 45.0 * (PI / 4.0).cos(), 45.0 * (PI / 4.0).sin()),
        );
    }
    println!("expected     {:>9.4} {:>9.4} {:>9.4} {:>9.4}", 1.0, 2.5, 0.5, 0.0);
    Ok(())
}
