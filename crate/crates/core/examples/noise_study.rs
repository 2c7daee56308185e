//! Spread of the recovered visibility under shot noise as the photon budget
//! and the true visibility change, next to the small-signal estimate
//! σ_V ≈ √(2 / (M·n0)).

use ndarray::Array2;
use quopt::demod::{demodulate_stack, fringe_bin_from_config, BinChoice, Window};
use quopt::interferometer::{synthesize_fvs, NoiseModel, ScanConfig};
use quopt::projection::TransmissionImage;

fn main() -> quopt::Result<()> {
    let pixels = 2000;
    println!("{:>8} {:>6} {:>10} {:>10} {:>10}", "n0", "V", "mean V", "std V", "estimate");
    for n0 in [1e2, 1e3, 1e4, 1e5] {
        for v in [0.01, 0.05, 0.2] {
            let mut cfg = ScanConfig::default();
            cfg.n0 = n0;
            cfg.noise = NoiseModel::Poisson;
            let t = (v / cfg.v_sys).powi(2);
            let img = TransmissionImage {
                pixel_pitch: 0.05,
                angle: 0.0,
                transmission: Array2::from_elem((1, pixels), t),
                pathlen: None,
            };
            let stack = synthesize_fvs(&img, &cfg, &Array2::zeros((1, pixels)))?;
            // weak fringes drown in noise, so the bin comes from the scan settings
            let vis = demodulate_stack(&stack, BinChoice::Fixed(fringe_bin_from_config(&cfg)), Window::None)?;
            let mean = vis.visibility.mean().unwrap();
            let std = vis.visibility.std(1.0);
            let estimate = (2.0 / (cfg.n_steps as f64 * n0)).sqrt();
            println!("{n0:>8.0e} {v:>6.2} {mean:>10.5} {std:>10.2e} {estimate:>10.2e}");
        }
    }
    Ok(())
}
