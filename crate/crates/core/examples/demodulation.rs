//! Compares FFT and min/max visibility extraction on a noiseless scan, then
//! shows the spectral leakage flag and the Hann window on a scan that does
//! not cover a whole number of fringes.

use ndarray::Array2;
use quopt::demod::{demodulate, BinChoice, DemodMethod, Window};
use quopt::interferometer::{default_phase_map, synthesize_fvs, ScanConfig};
use quopt::projection::TransmissionImage;

fn uniform(t: f64, n: usize) -> TransmissionImage {
    TransmissionImage { pixel_pitch: 0.05, angle: 0.0, transmission: Array2::from_elem((n, n), t), pathlen: None }
}

fn summary(label: &str, v: &Array2<f64>, truth: f64) {
    let worst = v.iter().map(|x| (x - truth).abs()).fold(0.0, f64::max);
    println!("{label:<28} mean V {:.6}  max |V - V_true| {worst:.2e}", v.mean().unwrap());
}

fn main() -> quopt::Result<()> {
    let n = 64;
    let cfg = ScanConfig::default();
    // √T · v_sys = 0.05
    let t = (0.05f64 / cfg.v_sys).powi(2);
    let stack = synthesize_fvs(&uniform(t, n), &cfg, &default_phase_map(n, n))?;

    let fft = demodulate(&stack, DemodMethod::Fft, BinChoice::Auto, Window::None)?;
    let mm = demodulate(&stack, DemodMethod::MinMax, BinChoice::Auto, Window::None)?;
    println!("fringe bin {}", fft.bin_used);
    summary("fft", &fft.visibility, 0.05);
    summary("min/max", &mm.visibility, 0.05);

    let off = ScanConfig::with_periods(40, 0.125, 5.3);
    let stack = synthesize_fvs(&uniform(t, n), &off, &default_phase_map(n, n))?;
    for window in [Window::None, Window::Hann] {
        let vis = demodulate(&stack, DemodMethod::Fft, BinChoice::Auto, window)?;
        summary(&format!("5.3 periods, {window:?} window"), &vis.visibility, 0.05);
        println!("  leakage warning: {}", vis.leakage_warning);
    }
    Ok(())
}
