use std::f64::consts::{PI, TAU};

use ndarray::{Array2, Array3};
use proptest::prelude::*;

use quopt::demod::{demodulate, demodulate_stack, BinChoice, DemodMethod, Window};
use quopt::formats::{read_pfm, read_qstk, read_qvol, write_pfm, write_qstk, write_qvol};
use quopt::interferometer::{synthesize_fvs, NoiseModel, ScanConfig};
use quopt::phantom::{rasterize, AnalyticShape, GridSpec, Phantom, ShapeKind};
use quopt::projection::{backproject_adjoint, DetectorGeometry, Projector, TransmissionImage};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

fn small_volume(n: usize, values: Vec<f64>) -> Phantom {
    let grid = GridSpec::cube(n, 0.1);
    let r = grid.support_radius() / grid.pitch;
    let mut mu = Array3::from_shape_vec((n, n, n), values).unwrap();
    let c = (n as f64 - 1.0) / 2.0;
    for ((_, j, i), v) in mu.indexed_iter_mut() {
        // keep clear of the support boundary by a voxel
        if (i as f64 - c).hypot(j as f64 - c) > r - 1.0 {
            *v = 0.0;
        }
    }
    Phantom::new(grid.pitch, mu).unwrap()
}

fn image(t: f64, rows: usize, cols: usize) -> TransmissionImage {
    TransmissionImage { pixel_pitch: 0.05, angle: 0.0, transmission: Array2::from_elem((rows, cols), t), pathlen: None }
}

fn wrapped(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI { PI } else { w }
}

fn rel_l2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn projector_and_backprojector_are_adjoint(
        values in prop::collection::vec(0.0f64..2.0, 10 * 10 * 10),
        data in prop::collection::vec(-1.0f64..1.0, 2 * 10 * 13),
        a0 in 0.0f64..PI,
        a1 in 0.0f64..TAU,
    ) {
        let phantom = small_volume(10, values);
        let det = DetectorGeometry::new(10, 13, 0.1);
        let projector = Projector::new(&phantom, det).unwrap();
        let angles = [a0, a1];
        let ys: Vec<Array2<f64>> = data.chunks(10 * 13).map(|c| Array2::from_shape_vec((10, 13), c.to_vec()).unwrap()).collect();
        let lhs: f64 = angles.iter().zip(&ys).map(|(&a, y)| (&projector.line_integrals(a) * y).sum()).sum();
        let back = backproject_adjoint(&ys, &angles, phantom.grid(), det).unwrap();
        let rhs = (phantom.mu() * &back).sum();
        let scale = lhs.abs().max(rhs.abs()).max(1e-9);
        prop_assert!((lhs - rhs).abs() / scale < 1e-3, "{lhs} vs {rhs}");
    }

    #[test]
    fn qvol_and_pfm_bytes_round_trip(
        values in prop::collection::vec(-1e3f64..1e3, 3 * 4 * 5),
        pitch in 0.001f64..1.0,
    ) {
        let vol = Array3::from_shape_vec((3, 4, 5), values.clone()).unwrap();
        let mut first = Vec::new();
        write_qvol(&mut first, &vol, pitch).unwrap();
        let (back, p) = read_qvol(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_qvol(&mut second, &back, p).unwrap();
        prop_assert_eq!(&first, &second);

        let img = Array2::from_shape_vec((4, 15), values).unwrap();
        let mut first = Vec::new();
        write_pfm(&mut first, &img).unwrap();
        let back = read_pfm(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_pfm(&mut second, &back).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn qstk_bytes_round_trip(t in 0.0f64..1.0, seed in any::<u64>(), angle in 0.0f64..TAU) {
        let mut cfg = ScanConfig::default();
        cfg.noise = NoiseModel::Poisson;
        cfg.seed = seed;
        let mut img = image(t, 3, 4);
        img.angle = angle;
        let stack = synthesize_fvs(&img, &cfg, &Array2::zeros((3, 4))).unwrap();
        let mut first = Vec::new();
        write_qstk(&mut first, &stack).unwrap();
        let back = read_qstk(&mut first.as_slice()).unwrap();
        prop_assert_eq!(back.config, stack.config);
        let mut second = Vec::new();
        write_qstk(&mut second, &back).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn visibility_is_gain_invariant(t in 0.01f64..1.0, alpha in 1e-3f64..1e4, phase in -PI..PI) {
        let cfg = ScanConfig::default();
        let stack = synthesize_fvs(&image(t, 2, 3), &cfg, &Array2::from_elem((2, 3), phase)).unwrap();
        for method in [DemodMethod::Fft, DemodMethod::MinMax] {
            let a = demodulate(&stack, method, BinChoice::Auto, Window::None).unwrap();
            let b = demodulate(&stack.scaled(alpha), method, BinChoice::Auto, Window::None).unwrap();
            for (x, y) in a.visibility.iter().zip(&b.visibility) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn background_scales_visibility(t in 0.05f64..1.0, b in 0.0f64..5e4) {
        let cfg = ScanConfig::default();
        let mut stack = synthesize_fvs(&image(t, 2, 2), &cfg, &Array2::zeros((2, 2))).unwrap();
        let clean = demodulate_stack(&stack, BinChoice::Auto, Window::None).unwrap();
        stack.counts.mapv_inplace(|c| c + b);
        let offset = demodulate_stack(&stack, BinChoice::Auto, Window::None).unwrap();
        let factor = cfg.n0 / (cfg.n0 + b);
        for (v, w) in clean.visibility.iter().zip(&offset.visibility) {
            prop_assert!((w - v * factor).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_is_recovered(phases in prop::collection::vec(-10.0f64..10.0, 12), t in 0.05f64..1.0) {
        let cfg = ScanConfig::default();
        let map = Array2::from_shape_vec((3, 4), phases).unwrap();
        let stack = synthesize_fvs(&image(t, 3, 4), &cfg, &map).unwrap();
        let vis = demodulate_stack(&stack, BinChoice::Auto, Window::None).unwrap();
        for (got, want) in vis.phase.iter().zip(&map) {
            prop_assert!(wrapped(got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn n0_scales_counts_not_visibility(t in 0.01f64..1.0, alpha in 0.01f64..100.0) {
        let cfg = ScanConfig::default();
        let mut scaled_cfg = cfg;
        scaled_cfg.n0 *= alpha;
        let map = Array2::from_elem((2, 2), 0.3);
        let a = synthesize_fvs(&image(t, 2, 2), &cfg, &map).unwrap();
        let b = synthesize_fvs(&image(t, 2, 2), &scaled_cfg, &map).unwrap();
        for (x, y) in a.counts.iter().zip(&b.counts) {
            prop_assert!((y - alpha * x).abs() <= 1e-9 * y.abs().max(1.0));
        }
        let va = demodulate_stack(&a, BinChoice::Auto, Window::None).unwrap();
        let vb = demodulate_stack(&b, BinChoice::Auto, Window::None).unwrap();
        for (x, y) in va.visibility.iter().zip(&vb.visibility) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn row_mass_is_angle_independent(
        x in -0.8f64..0.8, y in -0.8f64..0.8, r in 0.2f64..0.6, angle in 0.0f64..TAU,
    ) {
        let grid = GridSpec { nx: 48, ny: 48, nz: 6, pitch: 0.05 };
        let shapes = [AnalyticShape::cylinder([x * 0.5, y * 0.5, -0.1], [x * 0.5, y * 0.5, 0.1], r, 2.0)];
        let phantom = rasterize(&shapes, grid).unwrap();
        let projector = Projector::new(&phantom, DetectorGeometry::matching(&grid)).unwrap();
        let reference = projector.line_integrals(0.0);
        let p = projector.line_integrals(angle);
        for row in 0..grid.nz {
            let a = reference.row(row).sum();
            let b = p.row(row).sum();
            if a > 0.0 {
                prop_assert!((a - b).abs() / a < 5e-3, "row {row}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn opposite_projections_are_mirrored(angle in 0.0f64..PI, x in -0.5f64..0.5) {
        let grid = GridSpec { nx: 40, ny: 40, nz: 12, pitch: 0.05 };
        let shapes = [
            AnalyticShape::sphere([x, 0.2, 0.0], 0.25, 1.5),
            AnalyticShape::cylinder([-0.3, -0.2, -0.05], [-0.2, 0.3, 0.05], 0.1, 1.0),
        ];
        let phantom = rasterize(&shapes, grid).unwrap();
        let projector = Projector::new(&phantom, DetectorGeometry::matching(&grid)).unwrap();
        let a = projector.line_integrals(angle);
        let mut b = projector.line_integrals(angle + PI);
        b.invert_axis(ndarray::Axis(1));
        prop_assert!(rel_l2(&b, &a) < 1e-3, "{}", rel_l2(&b, &a));
    }

    #[test]
    fn rasterization_is_additive_for_disjoint_shapes(dx in 0.7f64..1.0, r in 0.1f64..0.3) {
        let grid = GridSpec::cube(40, 0.05);
        let a = AnalyticShape::sphere([-dx / 2.0, 0.0, 0.0], r, 1.0);
        let b = AnalyticShape::sphere([dx / 2.0, 0.1, 0.0], r, 2.5);
        let both = rasterize(&[a, b], grid).unwrap();
        let sum = rasterize(&[a], grid).unwrap().into_mu() + rasterize(&[b], grid).unwrap().mu();
        for (x, y) in both.mu().iter().zip(&sum) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn rotating_a_shape_matches_rotating_the_view() {
    let grid = GridSpec { nx: 96, ny: 96, nz: 24, pitch: 0.025 };
    let shapes = [
        AnalyticShape::cylinder([0.4, -0.3, -0.08], [0.3, -0.25, 0.08], 0.15, 2.0),
        AnalyticShape {
            kind: ShapeKind::HelixWire {
                axis: [-0.2, 0.1],
                z_start: -0.2,
                helix_radius: 0.25,
                helix_pitch: 0.2,
                wire_radius: 0.06,
                turns: 1.5,
                phase: 0.3,
            },
            mu0: 3.0,
        },
    ];
    let det = DetectorGeometry::matching(&grid);
    let original = rasterize(&shapes, grid).unwrap();
    let projector = Projector::new(&original, det).unwrap();
    let mut errors = Vec::new();
    for (alpha, theta) in [(0.3, 0.0), (1.2, 0.4), (2.5, 1.9), (5.9, 0.7)] {
        let turned: Vec<_> = shapes.iter().map(|s| s.rotated_z(alpha)).collect();
        let rotated = rasterize(&turned, grid).unwrap();
        let a = Projector::new(&rotated, det).unwrap().line_integrals(theta);
        let b = projector.line_integrals((theta + alpha) % TAU);
        errors.push(rel_l2(&a, &b));
    }
    assert!(errors.iter().all(|e| *e < 1e-3), "relative L2 errors {errors:?}");
}
