//! Rasterizes each analytic shape plus the wire figurine and prints a few
//! statistics for each. Pass a directory to also write QVOL files and
//! mid-slice PGM previews.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use quopt::formats::{write_pgm_preview, write_qvol};
use quopt::phantom::{rasterize, wire_figurine, AnalyticShape, FigurineParams, GridSpec, Phantom, ShapeKind};

fn main() -> quopt::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let grid = GridSpec::cube(96, 0.05);

    let helix = AnalyticShape {
        kind: ShapeKind::HelixWire {
            axis: [0.0, 0.0],
            z_start: -1.5,
            helix_radius: 0.8,
            helix_pitch: 1.0,
            wire_radius: 0.12,
            turns: 3.0,
            phase: 0.0,
        },
        mu0: 4.0,
    };
    let gallery: Vec<(&str, Phantom)> = vec![
        ("sphere", rasterize(&[AnalyticShape::sphere([0.3, -0.2, 0.0], 1.0, 2.0)], grid)?),
        ("cylinder", rasterize(&[AnalyticShape::cylinder([0.0, 0.0, -1.5], [0.6, 0.3, 1.5], 0.4, 2.0)], grid)?),
        ("disk", rasterize(&[AnalyticShape::disk_slab([0.0; 3], 1.6, 0.2, 1.0)], grid)?),
        ("helix", rasterize(&[helix], grid)?),
        ("figurine", wire_figurine(&FigurineParams { height_mm: 4.0, wire_radius_mm: 0.12, mu0: 4.0 }, grid)?),
    ];

    println!("{:<10} {:>9} {:>10} {:>10} {:>6}", "shape", "nonzero", "fraction", "sum mu·V", "parts");
    for (name, phantom) in &gallery {
        let voxels = phantom.mu().len() as f64;
        let integral = phantom.mu().sum() * grid.pitch.powi(3);
        println!(
            "{name:<10} {:>9} {:>9.3}% {:>10.4} {:>6}",
            phantom.nonzero_count(),
            100.0 * phantom.nonzero_count() as f64 / voxels,
            integral,
            phantom.component_count()
        );
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            write_qvol(&mut BufWriter::new(File::create(dir.join(format!("{name}.qvol")))?), phantom.mu(), phantom.pitch())?;
            let mid = phantom.slice(grid.nz / 2).to_owned();
            write_pgm_preview(&mut BufWriter::new(File::create(dir.join(format!("{name}_mid.pgm")))?), &mid)?;
        }
    }
    Ok(())
}
