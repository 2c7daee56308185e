//! The whole acquisition and reconstruction chain on the wire figurine:
//! 180 angles over a half turn, log opacity, ramp filter. Prints the
//! comparison against the phantom.
//!
//! Takes about a minute in release builds.

use quopt::interferometer::ScanConfig;
use quopt::phantom::{wire_figurine, FigurineParams, GridSpec};
use quopt::pipeline::{run_roundtrip, CorChoice, RoundTripParams};
use quopt::tomo::{Filter, OpacityMode};

fn main() -> quopt::Result<()> {
    let n = 128;
    let grid = GridSpec::cube(n, 0.05);
    let phantom = wire_figurine(&FigurineParams::default(), grid)?;
    println!("figurine: {} wire voxels on a {n}^3 grid", phantom.nonzero_count());

    for (mode, filter) in [(OpacityMode::Log, Filter::Ramp), (OpacityMode::Log, Filter::Hann), (OpacityMode::Linear, Filter::Ramp)] {
        let params = RoundTripParams {
            phantom: phantom.clone(),
            scan: ScanConfig::default(),
            angles: quopt::half_turn_angles(180),
            psf_fwhm_mm: 0.0,
            filter,
            mode,
            cor: CorChoice::Auto,
        };
        let (volume, report) = run_roundtrip(&params)?;
        println!(
            "{mode:?}/{filter}: NRMSE {:.4}  IoU {:.4}  Otsu {:.3} {}  COR {:+.3} px  ({:.1} s)",
            report.nrmse,
            report.support_iou,
            report.otsu_threshold,
            volume.units(),
            report.cor_offset_px,
            report.timings_s.values().sum::<f64>()
        );
    }
    Ok(())
}
