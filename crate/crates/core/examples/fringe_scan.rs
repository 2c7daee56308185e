//! Synthesizes a phase-stepped fringe scan for one rotation angle and prints
//! the count series of a pixel behind the object next to one in the open.

use quopt::interferometer::{run_simulation, NoiseModel, ScanConfig, SimulationSetup};
use quopt::phantom::{rasterize, AnalyticShape, GridSpec};
use quopt::projection::DetectorGeometry;

fn main() -> quopt::Result<()> {
    let grid = GridSpec::cube(48, 0.05);
    let phantom = rasterize(&[AnalyticShape::sphere([0.0; 3], 0.6, 2.0)], grid)?;

    let mut cfg = ScanConfig::default();
    cfg.noise = NoiseModel::Poisson;
    println!(
        "{} steps of {} µm, fringe period {} µm ({} periods), v_sys {}",
        cfg.n_steps,
        cfg.step_size_um,
        cfg.fringe_period_um,
        cfg.periods(),
        cfg.v_sys
    );

    let setup = SimulationSetup::new(DetectorGeometry::matching(&grid));
    let stack = run_simulation(&phantom, &cfg, &[0.0], &setup)?.remove(0);
    let (rows, cols) = (stack.rows(), stack.cols());
    let truth = stack.truth.as_ref().expect("synthesized stacks carry ground truth");

    let center = (rows / 2, cols / 2);
    let open = (rows / 2, 2);
    for (label, (r, c)) in [("behind object", center), ("open beam", open)] {
        println!("{label}: true V = {:.4}", truth.visibility[[r, c]]);
        let series = stack.series(r, c);
        for (k, chunk) in series.chunks(10).enumerate() {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:>6.0}")).collect();
            println!("  {:>2}: {}", k * 10, line.join(" "));
        }
    }
    Ok(())
}
