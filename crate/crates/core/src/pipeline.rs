//! End-to-end orchestration and the command-line front end.
//!
//! Each `cmd_*` function implements one verb of the `quopt` binary. They take
//! already-parsed arguments so they can be driven from tests directly; the
//! binary only parses, installs the thread pool and maps errors to exit codes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::config::{apply_scan_pairs, parse_key_values, parse_value, scan_config_pairs, KeyValues};
use crate::demod::{demodulate, BinChoice, DemodMethod, VisibilityImage, Window};
use crate::error::{QuoptError, Result};
use crate::formats::{
    read_pfm, read_qstk, read_qvol, write_pfm, write_pgm_preview, write_qstk, write_qvol, QSTK_VERSION, QVOL_VERSION,
};
use crate::interferometer::{run_simulation, ScanConfig, SimulationSetup, TransmissionExponent};
use crate::metrics::{cylinder_mask, iou, normalized_rmse, otsu_threshold, peak_position_error};
use crate::phantom::{rasterize, rasterize_union, wire_figurine, AnalyticShape, FigurineParams, GridSpec, Phantom, ShapeKind};
use crate::projection::DetectorGeometry;
use crate::tomo::{estimate_cor, preprocess, reconstruct_volume, Filter, OpacityMode, PreprocessOptions, Reference, Volume};

/// Acceptance thresholds of the round trip.
pub const MAX_NRMSE: f64 = 0.10;
pub const MIN_SUPPORT_IOU: f64 = 0.75;

// ---------------------------------------------------------------------------
// In-process round trip
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum ShapeChoice {
    #[default]
    Figurine,
    Sphere,
    Helix,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorChoice {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for CorChoice {
    type Err = QuoptError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(CorChoice::Auto)
        } else {
            parse_value("cor", s).map(CorChoice::Fixed)
        }
    }
}

/// Builds the phantom named by `shape` with figurine-scale defaults.
pub fn build_phantom(shape: ShapeChoice, grid: GridSpec, figurine: &FigurineParams, radius_mm: f64) -> Result<Phantom> {
    let mu0 = figurine.mu0;
    match shape {
        ShapeChoice::Figurine => wire_figurine(figurine, grid),
        ShapeChoice::Sphere => rasterize(&[AnalyticShape::sphere([0.0; 3], radius_mm, mu0)], grid),
        ShapeChoice::Disk => rasterize(
            &[AnalyticShape::disk_slab([0.0; 3], radius_mm, figurine.height_mm / 2.0, mu0)],
            grid,
        ),
        ShapeChoice::Helix => {
            let h = figurine.height_mm;
            let turns = 3.0;
            rasterize_union(
                &[AnalyticShape {
                    kind: ShapeKind::HelixWire {
                        axis: [0.0, 0.0],
                        z_start: -h / 2.0 + figurine.wire_radius_mm,
                        helix_radius: radius_mm,
                        helix_pitch: (h - 2.0 * figurine.wire_radius_mm) / turns,
                        wire_radius: figurine.wire_radius_mm,
                        turns,
                        phase: 0.0,
                    },
                    mu0,
                }],
                grid,
                mu0,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripParams {
    pub phantom: Phantom,
    pub scan: ScanConfig,
    pub angles: Vec<f64>,
    pub psf_fwhm_mm: f64,
    pub filter: Filter,
    pub mode: OpacityMode,
    pub cor: CorChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub nrmse: f64,
    pub support_iou: f64,
    pub otsu_threshold: f64,
    pub peak_position_error_vox: f64,
    pub cor_offset_px: f64,
    pub timings_s: BTreeMap<String, f64>,
}

impl RoundTripReport {
    pub fn passes(&self) -> bool {
        self.nrmse < MAX_NRMSE && self.support_iou > MIN_SUPPORT_IOU
    }
}

/// Radius (voxels) of the region compared against the phantom.
fn fov_radius_px(grid: &GridSpec) -> f64 {
    grid.support_radius() / grid.pitch
}

/// Phantom → projections → fringe stacks → visibility → opacity → FBP, with
/// the volume compared against the source phantom. Returns the volume too.
pub fn run_roundtrip(params: &RoundTripParams) -> Result<(Volume, RoundTripReport)> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let grid = params.phantom.grid();
    let mut setup = SimulationSetup::new(DetectorGeometry::matching(&grid));
    setup.psf_fwhm_mm = params.psf_fwhm_mm;
    let stacks = run_simulation(&params.phantom, &params.scan, &params.angles, &setup)?;
    lap("simulate", &mut timings);

    let vis = stacks
        .iter()
        .map(|s| demodulate(s, DemodMethod::Fft, BinChoice::Auto, Window::None))
        .collect::<Result<Vec<_>>>()?;
    lap("extract", &mut timings);

    let volume = reconstruct_from_visibility(
        &vis,
        Reference::Scalar(params.scan.v_sys),
        params.mode,
        params.cor,
        params.filter,
        None,
        params.scan.transmission_exponent,
    )?;
    lap("reconstruct", &mut timings);

    let report = compare(&volume, &params.phantom, timings)?;
    Ok((volume, report))
}

/// Preprocesses (estimating the COR when asked), reconstructs and converts
/// log-mode output back to attenuation in mm⁻¹.
pub fn reconstruct_from_visibility(
    vis: &[VisibilityImage],
    reference: Reference,
    mode: OpacityMode,
    cor: CorChoice,
    filter: Filter,
    fov_radius_px: Option<f64>,
    exponent: TransmissionExponent,
) -> Result<Volume> {
    let cols = vis
        .first()
        .map(|v| v.visibility.ncols())
        .ok_or_else(|| QuoptError::InvalidParameter("no visibility images".into()))?;
    let cor_offset = match cor {
        CorChoice::Fixed(v) => v,
        CorChoice::Auto => {
            let raw = preprocess(
                vis,
                &PreprocessOptions { reference: Some(reference.clone()), mode, fov_radius_px: None, cor_offset: 0.0 },
            )?;
            estimate_cor(&raw)?
        }
    };
    let opts = PreprocessOptions {
        reference: Some(reference),
        mode,
        fov_radius_px: Some(fov_radius_px.unwrap_or(cols as f64 / 2.0 - 1.0)),
        cor_offset,
    };
    let proj = preprocess(vis, &opts)?;
    let volume = reconstruct_volume(&proj, filter, None)?;
    Ok(match mode {
        OpacityMode::Log => volume.scaled(1.0 / exponent.power()),
        OpacityMode::Linear => volume,
    })
}

/// Scores a reconstruction against its phantom inside the field of view.
pub fn compare(volume: &Volume, phantom: &Phantom, timings_s: BTreeMap<String, f64>) -> Result<RoundTripReport> {
    let truth = phantom.mu();
    if volume.data.dim() != truth.dim() {
        return Err(QuoptError::GeometryMismatch(format!(
            "volume {:?} vs phantom {:?}",
            volume.data.dim(),
            truth.dim()
        )));
    }
    let mask = cylinder_mask(truth.dim(), fov_radius_px(&phantom.grid()));
    let nrmse = normalized_rmse(&volume.data, truth, &mask);
    let inside: Vec<f64> = volume
        .data
        .iter()
        .zip(mask.iter())
        .filter_map(|(v, m)| m.then_some(*v))
        .collect();
    let threshold = otsu_threshold(&inside);
    let recon_support = volume.data.mapv(|v| v > threshold);
    let true_support = truth.mapv(|v| v > 0.0);
    Ok(RoundTripReport {
        nrmse,
        support_iou: iou(&recon_support, &true_support, &mask),
        otsu_threshold: threshold,
        peak_position_error_vox: peak_position_error(&volume.data, truth),
        cor_offset_px: volume.cor_offset,
        timings_s,
    })
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "quopt", version, about = "Visibility tomography with induced-coherence fringe scans")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "QUOPT_JOBS", default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Rasterize a test object into a QVOL volume.
    Phantom(PhantomArgs),
    /// Acquire fringe stacks of a phantom over a rotation series.
    Simulate(SimulateArgs),
    /// Demodulate fringe stacks into visibility, amplitude and phase images.
    Extract(ExtractArgs),
    /// Filtered back-projection of visibility images.
    Reconstruct(ReconstructArgs),
    /// Run the whole chain in memory and score it against the phantom.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_enum, default_value_t = ShapeChoice::Figurine)]
    pub kind: ShapeChoice,
    /// Voxels per side.
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// Voxel pitch, mm.
    #[arg(long, default_value_t = 0.05)]
    pub pitch: f64,
    /// Object height, mm.
    #[arg(long, default_value_t = 5.0)]
    pub height: f64,
    #[arg(long, default_value_t = 0.15)]
    pub wire_radius: f64,
    /// Sphere, disk or helix radius, mm.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Attenuation inside the object, 1/mm.
    #[arg(long, default_value_t = 4.0)]
    pub mu0: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Phantom volume (QVOL).
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Re-run the settings recorded in an earlier manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Number of rotation angles.
    #[arg(long)]
    pub angles: Option<usize>,
    /// Angular range covered, degrees.
    #[arg(long)]
    pub angle_span_deg: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Mirror step, µm.
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Fringe periods per scan; ignored when a fringe period is given.
    #[arg(long)]
    pub periods: Option<f64>,
    /// Fringe period in mirror travel, µm.
    #[arg(long)]
    pub fringe_period: Option<f64>,
    #[arg(long)]
    pub v_sys: Option<f64>,
    /// Mean counts per frame.
    #[arg(long)]
    pub n0: Option<f64>,
    /// amplitude or intensity.
    #[arg(long)]
    pub exponent: Option<String>,
    /// none, poisson or poisson+gaussian.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub read_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detector blur FWHM, mm.
    #[arg(long)]
    pub psf_fwhm: Option<f64>,
    #[arg(long)]
    pub detector_rows: Option<usize>,
    #[arg(long)]
    pub detector_cols: Option<usize>,
    /// Detector pixel pitch in the object plane, mm.
    #[arg(long)]
    pub pixel_pitch: Option<f64>,
    /// Offset of the rotation axis from the detector center, pixels.
    #[arg(long, allow_hyphen_values = true)]
    pub cor_shift_px: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory written by `simulate`.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// fft or minmax.
    #[arg(long, default_value = "fft")]
    pub method: DemodMethod,
    /// `auto` or a fixed DFT bin.
    #[arg(long, default_value = "auto")]
    pub bin: BinChoice,
    /// none or hann.
    #[arg(long, default_value = "none")]
    pub window: Window,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Directory written by `extract`.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// log or linear.
    #[arg(long, default_value = "log")]
    pub mode: OpacityMode,
    /// ramp, shepp-logan or hann.
    #[arg(long, default_value = "ramp")]
    pub filter: Filter,
    /// `auto` or a column offset in pixels.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub cor: CorChoice,
    /// Empty-scene visibility; defaults to the recorded system visibility.
    #[arg(long)]
    pub v_ref: Option<f64>,
    /// Field-of-view half-width, pixels.
    #[arg(long)]
    pub fov_radius: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long, value_enum, default_value_t = ShapeChoice::Figurine)]
    pub kind: ShapeChoice,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.05)]
    pub pitch: f64,
    #[arg(long, default_value_t = 180)]
    pub angles: usize,
    #[arg(long, default_value = "none")]
    pub noise: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub psf_fwhm: f64,
    #[arg(long, default_value = "ramp")]
    pub filter: Filter,
    #[arg(long, default_value = "log")]
    pub mode: OpacityMode,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub cor: CorChoice,
    /// Also write the volume and report here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line on a pool of `cli.jobs` threads.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| QuoptError::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Roundtrip(a) => cmd_roundtrip(a),
    })
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub format_versions: BTreeMap<String, u32>,
    /// Settings as given; re-running them reproduces the outputs.
    pub settings: KeyValues,
    /// Every parameter after defaults were applied.
    pub resolved: KeyValues,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub angles_rad: Vec<f64>,
    pub timings_s: BTreeMap<String, f64>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            tool: "quopt".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            format_versions: [("qstk".to_string(), QSTK_VERSION), ("qvol".to_string(), QVOL_VERSION)].into(),
            settings: KeyValues::new(),
            resolved: KeyValues::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            angles_rad: Vec::new(),
            timings_s: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| QuoptError::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| QuoptError::Format(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        QuoptError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

/// Files in `dir` named `{prefix}NNN.{ext}`, sorted.
fn numbered_files(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| {
                n.strip_prefix(prefix)
                    .and_then(|r| r.strip_suffix(ext))
                    .and_then(|r| r.strip_suffix('.'))
                    .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            })
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(QuoptError::Format(format!("no {prefix}*.{ext} files in {}", dir.display())));
    }
    Ok(files)
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<()> {
    let grid = GridSpec::cube(args.grid, args.pitch);
    let params = FigurineParams { height_mm: args.height, wire_radius_mm: args.wire_radius, mu0: args.mu0 };
    let phantom = build_phantom(args.kind, grid, &params, args.radius)?;
    let mut w = create(&args.out)?;
    write_qvol(&mut w, phantom.mu(), phantom.pitch())?;
    w.flush()?;
    println!(
        "wrote {} ({}x{}x{}, {} nonzero voxels)",
        args.out.display(),
        grid.nx,
        grid.ny,
        grid.nz,
        phantom.nonzero_count()
    );
    Ok(())
}

pub fn read_phantom(path: &Path) -> Result<Phantom> {
    let (mu, pitch) = read_qvol(&mut open(path)?)?;
    Phantom::new(pitch, mu)
}

impl SimulateArgs {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        let s = |v: Option<f64>| v.map(|v| format!("{v:?}"));
        vec![
            ("phantom", self.phantom.as_ref().map(|p| p.display().to_string())),
            ("angles", self.angles.map(|v| v.to_string())),
            ("angle_span_deg", s(self.angle_span_deg)),
            ("n_steps", self.steps.map(|v| v.to_string())),
            ("step_size_um", s(self.step_size)),
            ("periods", s(self.periods)),
            ("fringe_period_um", s(self.fringe_period)),
            ("v_sys", s(self.v_sys)),
            ("n0", s(self.n0)),
            ("transmission_exponent", self.exponent.clone()),
            ("noise", self.noise.clone()),
            ("read_sigma", s(self.read_sigma)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("psf_fwhm_mm", s(self.psf_fwhm)),
            ("detector_rows", self.detector_rows.map(|v| v.to_string())),
            ("detector_cols", self.detector_cols.map(|v| v.to_string())),
            ("pixel_pitch_mm", s(self.pixel_pitch)),
            ("cor_shift_px", s(self.cor_shift_px)),
        ]
    }
}

/// Everything a simulation run needs, resolved from settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub phantom: PathBuf,
    pub scan: ScanConfig,
    pub angles: Vec<f64>,
    pub angle_span_deg: f64,
    pub setup: SimulationSetup,
}

/// Resolves settings over the defaults. Unknown keys are rejected.
pub fn plan_simulation(settings: &KeyValues) -> Result<(SimulationPlan, Phantom)> {
    let mut rest = settings.clone();
    let mut take = |k: &str| rest.remove(k).map(|v| (k.to_string(), v));
    let phantom_path = take("phantom")
        .map(|(_, v)| PathBuf::from(v))
        .ok_or_else(|| QuoptError::InvalidParameter("no phantom given".into()))?;
    let n_angles: usize = match take("angles") {
        Some((k, v)) => parse_value(&k, &v)?,
        None => 180,
    };
    let span_deg: f64 = match take("angle_span_deg") {
        Some((k, v)) => parse_value(&k, &v)?,
        None => 180.0,
    };
    let periods: Option<f64> = take("periods").map(|(k, v)| parse_value(&k, &v)).transpose()?;
    let psf: f64 = take("psf_fwhm_mm").map(|(k, v)| parse_value(&k, &v)).transpose()?.unwrap_or(0.0);
    let rows: Option<usize> = take("detector_rows").map(|(k, v)| parse_value(&k, &v)).transpose()?;
    let cols: Option<usize> = take("detector_cols").map(|(k, v)| parse_value(&k, &v)).transpose()?;
    let pitch: Option<f64> = take("pixel_pitch_mm").map(|(k, v)| parse_value(&k, &v)).transpose()?;
    let shift: f64 = take("cor_shift_px").map(|(k, v)| parse_value(&k, &v)).transpose()?.unwrap_or(0.0);

    let explicit_period = rest.contains_key("fringe_period_um");
    let mut scan = ScanConfig::default();
    apply_scan_pairs(&mut scan, &mut rest)?;
    if let Some(k) = rest.keys().next() {
        return Err(QuoptError::InvalidParameter(format!("unknown setting '{k}'")));
    }
    if !explicit_period {
        scan.fringe_period_um = scan.scan_length_um() / periods.unwrap_or(5.0);
    }
    scan.validate()?;
    if n_angles == 0 {
        return Err(QuoptError::InvalidParameter("angles must be at least 1".into()));
    }
    if !(span_deg > 0.0 && span_deg <= 360.0) {
        return Err(QuoptError::InvalidParameter(format!("angle span must be in (0, 360], got {span_deg}")));
    }
    let step = span_deg.to_radians() / n_angles as f64;
    let angles = (0..n_angles).map(|i| i as f64 * step).collect();

    let phantom = read_phantom(&phantom_path)?;
    let grid = phantom.grid();
    let mut det = DetectorGeometry::matching(&grid);
    det.rows = rows.unwrap_or(det.rows);
    det.cols = cols.unwrap_or(det.cols);
    det.pixel_pitch = pitch.unwrap_or(det.pixel_pitch);
    det.col_offset_px = shift;
    let mut setup = SimulationSetup::new(det);
    setup.psf_fwhm_mm = psf;
    Ok((SimulationPlan { phantom: phantom_path, scan, angles, angle_span_deg: span_deg, setup }, phantom))
}

fn plan_pairs(plan: &SimulationPlan) -> KeyValues {
    let det = &plan.setup.detector;
    let mut kv: KeyValues = scan_config_pairs(&plan.scan).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    kv.insert("phantom".into(), plan.phantom.display().to_string());
    kv.insert("angles".into(), plan.angles.len().to_string());
    kv.insert("angle_span_deg".into(), format!("{:?}", plan.angle_span_deg));
    kv.insert("psf_fwhm_mm".into(), format!("{:?}", plan.setup.psf_fwhm_mm));
    kv.insert("detector_rows".into(), det.rows.to_string());
    kv.insert("detector_cols".into(), det.cols.to_string());
    kv.insert("pixel_pitch_mm".into(), format!("{:?}", det.pixel_pitch));
    kv.insert("cor_shift_px".into(), format!("{:?}", det.col_offset_px));
    kv
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let mut settings = KeyValues::new();
    if let Some(path) = &args.manifest {
        let m: RunManifest = read_json(path)?;
        settings.extend(m.settings);
    }
    if let Some(path) = &args.config {
        settings.extend(parse_key_values(&fs::read_to_string(path)?)?);
    }
    for (k, v) in args.overrides() {
        if let Some(v) = v {
            settings.insert(k.to_string(), v);
        }
    }
    let (plan, phantom) = plan_simulation(&settings)?;
    let stacks = run_simulation(&phantom, &plan.scan, &plan.angles, &plan.setup)?;
    let sim_time = start.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new("simulate");
    for (i, stack) in stacks.iter().enumerate() {
        let name = format!("stack_{i:03}.qstk");
        let mut w = create(&args.out.join(&name))?;
        write_qstk(&mut w, stack)?;
        w.flush()?;
        manifest.outputs.push(name);
    }
    manifest.resolved = plan_pairs(&plan);
    manifest.settings = settings;
    manifest.inputs.push(plan.phantom.display().to_string());
    manifest.angles_rad = plan.angles.clone();
    manifest.timings_s.insert("simulate".into(), sim_time);
    manifest.timings_s.insert("total".into(), start.elapsed().as_secs_f64());
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!("wrote {} fringe stacks to {}", stacks.len(), args.out.display());
    Ok(())
}

/// Side-car metadata written by `extract`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractInfo {
    pub method: String,
    pub angles_rad: Vec<f64>,
    pub bins: Vec<usize>,
    pub pixel_pitch_mm: f64,
    pub v_sys: f64,
    pub transmission_exponent: String,
    pub leakage_warning: bool,
    pub files: Vec<String>,
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let files = numbered_files(&args.input, "stack_", "qstk")?;
    fs::create_dir_all(&args.out)?;
    let mut info: Option<ExtractInfo> = None;
    for (i, path) in files.iter().enumerate() {
        let stack = read_qstk(&mut open(path)?)?;
        let vis = demodulate(&stack, args.method, args.bin, args.window)?;
        let info = info.get_or_insert_with(|| ExtractInfo {
            method: args.method.to_string(),
            angles_rad: Vec::new(),
            bins: Vec::new(),
            pixel_pitch_mm: stack.pixel_pitch,
            v_sys: stack.config.v_sys,
            transmission_exponent: stack.config.transmission_exponent.to_string(),
            leakage_warning: false,
            files: Vec::new(),
        });
        info.angles_rad.push(vis.angle);
        info.bins.push(vis.bin_used);
        info.leakage_warning |= vis.leakage_warning;
        for (prefix, img) in [("vis", &vis.visibility), ("amp", &vis.amplitude), ("phase", &vis.phase)] {
            let name = format!("{prefix}_{i:03}.pfm");
            let mut w = create(&args.out.join(&name))?;
            write_pfm(&mut w, img)?;
            w.flush()?;
            info.files.push(name);
        }
        let mut w = create(&args.out.join(format!("vis_{i:03}.pgm")))?;
        write_pgm_preview(&mut w, &vis.visibility)?;
        w.flush()?;
    }
    let info = info.expect("at least one stack");
    if info.leakage_warning {
        eprintln!("warning: scan length is not a whole number of fringe periods; expect spectral leakage");
    }
    write_json(&args.out.join("extract.json"), &info)?;
    println!("extracted {} angles to {}", info.angles_rad.len(), args.out.display());
    Ok(())
}

/// Loads the visibility images written by `extract`.
pub fn load_visibility(dir: &Path) -> Result<(ExtractInfo, Vec<VisibilityImage>)> {
    let info: ExtractInfo = read_json(&dir.join("extract.json"))?;
    let files = numbered_files(dir, "vis_", "pfm")?;
    if files.len() != info.angles_rad.len() {
        return Err(QuoptError::Format(format!(
            "{} visibility images but {} angles recorded",
            files.len(),
            info.angles_rad.len()
        )));
    }
    let method = info.method.parse()?;
    let images = files
        .iter()
        .zip(&info.angles_rad)
        .zip(&info.bins)
        .map(|((path, &angle), &bin)| {
            let visibility = read_pfm(&mut open(path)?)?;
            let dim = visibility.dim();
            Ok(VisibilityImage {
                valid: visibility.mapv(|v| v > 0.0),
                visibility,
                amplitude: ndarray::Array2::zeros(dim),
                phase: ndarray::Array2::zeros(dim),
                bin_used: bin,
                method,
                angle,
                pixel_pitch: info.pixel_pitch_mm,
                leakage_warning: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((info, images))
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let start = Instant::now();
    let (info, vis) = load_visibility(&args.input)?;
    let exponent: TransmissionExponent = info.transmission_exponent.parse()?;
    let v_ref = args.v_ref.unwrap_or(info.v_sys);
    let volume = reconstruct_from_visibility(
        &vis,
        Reference::Scalar(v_ref),
        args.mode,
        args.cor,
        args.filter,
        args.fov_radius,
        exponent,
    )?;
    fs::create_dir_all(&args.out)?;
    let mut w = create(&args.out.join("volume.qvol"))?;
    write_qvol(&mut w, &volume.data, volume.pitch)?;
    w.flush()?;
    let slices = args.out.join("slices");
    fs::create_dir_all(&slices)?;
    for (k, slice) in volume.data.axis_iter(Axis(0)).enumerate() {
        let slice = slice.to_owned();
        let mut w = create(&slices.join(format!("slice_{k:03}.pgm")))?;
        write_pgm_preview(&mut w, &slice)?;
        w.flush()?;
        let mut w = create(&slices.join(format!("slice_{k:03}.pfm")))?;
        write_pfm(&mut w, &slice)?;
        w.flush()?;
    }
    let mut manifest = RunManifest::new("reconstruct");
    manifest.inputs.push(args.input.display().to_string());
    manifest.outputs.push("volume.qvol".into());
    manifest.angles_rad = info.angles_rad;
    for (k, v) in [
        ("mode", args.mode.to_string()),
        ("filter", volume.filter.to_string()),
        ("v_ref", format!("{v_ref:?}")),
        ("cor_offset_px", format!("{:?}", volume.cor_offset)),
        ("transmission_exponent", exponent.to_string()),
        ("units", volume.units().to_string()),
    ] {
        manifest.resolved.insert(k.into(), v);
    }
    manifest.timings_s.insert("total".into(), start.elapsed().as_secs_f64());
    write_json(&args.out.join("reconstruct.json"), &manifest)?;
    println!(
        "reconstructed {:?} volume (COR offset {:.3} px) into {}",
        volume.data.dim(),
        volume.cor_offset,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_roundtrip(args: &RoundtripArgs) -> Result<()> {
    let grid = GridSpec::cube(args.grid, args.pitch);
    let figurine = FigurineParams::default();
    let phantom = build_phantom(args.kind, grid, &figurine, 1.0)?;
    let mut scan = ScanConfig::default();
    scan.noise = crate::config::parse_noise(&args.noise, 0.0)?;
    scan.seed = args.seed;
    let params = RoundTripParams {
        phantom,
        scan,
        angles: crate::half_turn_angles(args.angles),
        psf_fwhm_mm: args.psf_fwhm,
        filter: args.filter,
        mode: args.mode,
        cor: args.cor,
    };
    let (volume, report) = run_roundtrip(&params)?;
    println!("nrmse              {:.4}", report.nrmse);
    println!("support IoU        {:.4}", report.support_iou);
    println!("otsu threshold     {:.4} {}", report.otsu_threshold, volume.units());
    println!("peak offset        {:.2} voxels", report.peak_position_error_vox);
    println!("COR offset         {:.3} px", report.cor_offset_px);
    for (k, v) in &report.timings_s {
        println!("time {k:<13} {v:.2} s");
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let mut w = create(&dir.join("volume.qvol"))?;
        write_qvol(&mut w, &volume.data, volume.pitch)?;
        w.flush()?;
        write_json(&dir.join("report.json"), &report)?;
    }
    if report.passes() {
        Ok(())
    } else {
        Err(QuoptError::Numeric(format!(
            "round trip out of tolerance: nrmse {:.4} (< {MAX_NRMSE}), IoU {:.4} (> {MIN_SUPPORT_IOU})",
            report.nrmse, report.support_iou
        )))
    }
}
