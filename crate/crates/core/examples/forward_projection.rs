//! Projects a sphere and compares the central detector row against the
//! analytic chord length, then shows the effect of the detector blur.

use std::f64::consts::PI;

use quopt::phantom::{rasterize, AnalyticShape, GridSpec};
use quopt::projection::{apply_psf, DetectorGeometry, Projector};

fn main() -> quopt::Result<()> {
    let grid = GridSpec::cube(128, 0.05);
    let (r, mu0) = (1.5, 0.6);
    let phantom = rasterize(&[AnalyticShape::sphere([0.0; 3], r, mu0)], grid)?;
    let det = DetectorGeometry::matching(&grid);
    let projector = Projector::new(&phantom, det)?;

    let row = det.rows / 2;
    println!("   s (mm)   pathlen   analytic");
    let p = projector.line_integrals(PI / 5.0);
    for c in (0..det.cols).step_by(8) {
        let s = det.s(c);
        let z = det.z(row);
        let rr = r * r - s * s - z * z;
        let analytic = if rr > 0.0 { 2.0 * mu0 * rr.sqrt() } else { 0.0 };
        println!("{s:>9.3} {:>9.4} {analytic:>10.4}", p[[row, c]]);
    }

    let img = projector.project(0.0);
    for fwhm in [0.0, 0.1, 0.3] {
        let blurred = apply_psf(&img, fwhm)?;
        let t = &blurred.transmission;
        let min = t.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("psf fwhm {fwhm:.1} mm: min T {min:.4}, mean T {:.6}", t.mean().unwrap());
    }
    Ok(())
}
