//! Simulation and reconstruction toolkit for optical projection tomography
//! with undetected photons.
//!
//! The chain runs phantom → parallel-beam projection → phase-scanned fringe
//! stacks → per-pixel visibility demodulation → filtered back-projection:
//!
//! * [`phantom`] rasterizes analytic shapes (and a twisted-wire figurine) into
//!   attenuation voxel grids.
//! * [`projection`] computes line integrals with an interpolating ray
//!   traversal and converts them to transmission images.
//! * [`interferometer`] turns transmission into fringe visibility scans with
//!   optional shot and read noise.
//! * [`demod`] recovers visibility, amplitude and phase per pixel, either from
//!   the DFT of each pixel's series or from its extrema.
//! * [`tomo`] converts visibility to opacity, finds the rotation axis, builds
//!   sinograms and reconstructs slices.
//! * [`formats`], [`config`], [`metrics`] and [`pipeline`] provide the file
//!   formats, configuration parsing, quality metrics and command front end.

pub mod config;
pub mod demod;
pub mod error;
pub mod formats;
pub mod interferometer;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod projection;
pub mod tomo;

pub use error::{QuoptError, Result};

/// Default half-turn protocol: 0°..179° in 1° steps, in radians.
pub fn half_turn_angles(count: usize) -> Vec<f64> {
    let step = std::f64::consts::PI / count as f64;
    (0..count).map(|i| i as f64 * step).collect()
}
