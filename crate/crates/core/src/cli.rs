//! Command-line front end: argument definitions, `--config` merging and the
//! `simulate`, `weights`, `unmix`, `sweep` and `evaluate` commands.
//!
//! Every long flag of a command is also a key of its `--config` file; flags
//! given on the command line win over file values. Each command writes a
//! `manifest.txt` in that same format, so a run can be repeated with
//! `--config manifest.txt --out-dir <dir>`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::data::{AbundanceImage, EndmemberLibrary, SpectralCube, SurfaceModel};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_csv, lambda_curves_csv, records_csv, rmse_edge, rmse_whole, summarize, summary_csv, sweep,
    SweepGrid, SweepInputs, SweepOutcome, DEFAULT_LAMBDAS, DEFAULT_SIGMAS,
};
use crate::grid::{build_difference_operator, Direction, GridDims};
use crate::guidance::{compute_weights, GuidanceSources, WeightConfig, WeightKind};
use crate::io::{
    mask_values, read_cube, read_endmembers_csv, read_mask, read_raster, write_bytes, write_cube,
    write_endmembers_csv, write_raster, RunConfig,
};
use crate::simgen::{
    default_class_heights, generate_scene, load_endmembers, Scene, SceneSpec, DEFAULT_POTTS_BETA,
    DEFAULT_SNR_DSM_DB, DEFAULT_SNR_HSI_DB,
};
use crate::solver::{reweighted_unmix, unmix, SolverOptions, UnmixResult};

pub const CUBE_FILE: &str = "cube.hsi";
pub const ENDMEMBER_FILE: &str = "endmembers.csv";
pub const DSM_FILE: &str = "dsm.raster";
pub const DSM_CLEAN_FILE: &str = "dsm_clean.raster";
pub const EDGE_MASK_FILE: &str = "edge_mask.raster";
pub const LABELS_FILE: &str = "labels.raster";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TRACE_FILE: &str = "trace.csv";

/// `abundance_00.raster`, `abundance_01.raster`, ...
pub fn abundance_file(m: usize) -> String {
    format!("abundance_{m:02}.raster")
}

#[derive(Debug, Parser)]
#[command(
    name = "hsi-unmix",
    version,
    about = "Guidance-weighted TV spectral unmixing with DSM-aided regularization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: cube, true abundances, DSM, edge mask, labels.
    Simulate(SimulateArgs),
    /// Compute and export the per-direction edge weights of a guidance source.
    Weights(WeightsArgs),
    /// Estimate abundances from a cube and an endmember library.
    Unmix(UnmixArgs),
    /// Sweep (kind, lambda, sigma) over scenes with known ground truth.
    Sweep(SweepArgs),
    /// RMSE of estimated abundance planes against ground truth.
    Evaluate(EvaluateArgs),
}

fn parse_kind(s: &str) -> std::result::Result<WeightKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Scene generation parameters shared by `simulate` and seeded `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Image height in pixels.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Image width in pixels.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Number of endmembers M (ignored with --endmember-file).
    #[arg(long, default_value_t = 5)]
    pub num_endmembers: usize,
    /// Number of spectral bands L (ignored with --endmember-file).
    #[arg(long, default_value_t = 100)]
    pub bands: usize,
    /// Number of Potts regions.
    #[arg(long, default_value_t = 5)]
    pub regions: usize,
    /// Potts coupling; larger values give larger regions.
    #[arg(long, default_value_t = DEFAULT_POTTS_BETA)]
    pub beta: f64,
    /// HSI signal-to-noise ratio in dB (`inf` for a noiseless cube).
    #[arg(long, default_value_t = DEFAULT_SNR_HSI_DB)]
    pub snr_hsi: f64,
    /// DSM signal-to-noise ratio in dB (`inf` for a noiseless DSM).
    #[arg(long, default_value_t = DEFAULT_SNR_DSM_DB)]
    pub snr_dsm: f64,
    /// Comma-separated height of each region class [default: 0,2,6,18,...].
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub class_heights: Option<Vec<f64>>,
    /// Endmember CSV to use instead of synthetic spectra.
    #[arg(long)]
    pub endmember_file: Option<PathBuf>,
}

impl SceneArgs {
    fn spec(&self, seed: u64) -> Result<(SceneSpec, Option<EndmemberLibrary>)> {
        let library = self
            .endmember_file
            .as_deref()
            .map(load_endmembers)
            .transpose()?;
        let (m, l) = library
            .as_ref()
            .map_or((self.num_endmembers, self.bands), |e| (e.count(), e.bands()));
        let spec = SceneSpec {
            potts_beta: self.beta,
            snr_hsi_db: self.snr_hsi,
            snr_dsm_db: self.snr_dsm,
            class_heights: self
                .class_heights
                .clone()
                .unwrap_or_else(|| default_class_heights(self.regions)),
            ..SceneSpec::new(GridDims::new(self.height, self.width)?, m, l, self.regions, seed)
        };
        Ok((spec, library))
    }

    fn record(&self, cfg: &mut RunConfig) {
        cfg.push("height", self.height);
        cfg.push("width", self.width);
        cfg.push("num-endmembers", self.num_endmembers);
        cfg.push("bands", self.bands);
        cfg.push("regions", self.regions);
        cfg.push("beta", self.beta);
        cfg.push("snr-hsi", self.snr_hsi);
        cfg.push("snr-dsm", self.snr_dsm);
        if let Some(h) = &self.class_heights {
            cfg.push("class-heights", join(h));
        }
        if let Some(p) = &self.endmember_file {
            cfg.push("endmember-file", p.display());
        }
    }
}

/// ADMM and reweighting controls shared by `unmix` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Augmented-Lagrangian penalty.
    #[arg(long, default_value_t = SolverOptions::default().mu)]
    pub mu: f64,
    /// ADMM iteration cap per solve.
    #[arg(long, default_value_t = SolverOptions::default().max_iterations)]
    pub max_iter: usize,
    /// Relative primal and dual residual tolerance.
    #[arg(long, default_value_t = SolverOptions::default().tolerance)]
    pub tol: f64,
    /// Maximum reweighting rounds for abundance-based kinds.
    #[arg(long, default_value_t = SolverOptions::default().outer_max)]
    pub outer_max: usize,
    /// Relative abundance change that stops the reweighting.
    #[arg(long, default_value_t = SolverOptions::default().outer_tolerance)]
    pub outer_tol: f64,
}

impl SolverArgs {
    fn options(&self, lambda: f64) -> SolverOptions {
        SolverOptions {
            lambda,
            mu: self.mu,
            max_iterations: self.max_iter,
            tolerance: self.tol,
            outer_max: self.outer_max,
            outer_tolerance: self.outer_tol,
        }
    }

    fn record(&self, cfg: &mut RunConfig) {
        cfg.push("mu", self.mu);
        cfg.push("max-iter", self.max_iter);
        cfg.push("tol", self.tol);
        cfg.push("outer-max", self.outer_max);
        cfg.push("outer-tol", self.outer_tol);
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Key-value file supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct WeightsArgs {
    /// Weight kind: none, hi, pc1, a, dsm, hi-dsm, pc1-dsm, a-dsm.
    #[arg(long, value_parser = parse_kind)]
    pub kind: WeightKind,
    /// Hyperspectral cube (hi, pc1 and their DSM combinations).
    #[arg(long)]
    pub cube: Option<PathBuf>,
    /// DSM raster (DSM-based kinds).
    #[arg(long)]
    pub dsm: Option<PathBuf>,
    /// Directory of abundance_XX.raster planes (a, a-dsm).
    #[arg(long)]
    pub abundance_dir: Option<PathBuf>,
    /// Kernel scale of the cube, principal component or abundances.
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Kernel scale of the DSM.
    #[arg(long, default_value_t = 0.01)]
    pub sigma_height: f64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Key-value file supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct UnmixArgs {
    /// Hyperspectral cube.
    #[arg(long)]
    pub cube: PathBuf,
    /// Endmember CSV (one column per endmember, one row per band).
    #[arg(long)]
    pub endmembers: PathBuf,
    /// Weight kind: none, hi, pc1, a, dsm, hi-dsm, pc1-dsm, a-dsm.
    #[arg(long, value_parser = parse_kind, default_value = "none")]
    pub weight_kind: WeightKind,
    /// DSM raster; required by DSM-based kinds and rejected by the others.
    #[arg(long)]
    pub dsm: Option<PathBuf>,
    /// TV regularization strength.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Kernel scale of the cube, principal component or abundances.
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Kernel scale of the DSM.
    #[arg(long, default_value_t = 0.01)]
    pub sigma_height: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Key-value file supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// Directory written by `simulate`; repeatable.
    #[arg(long, action = ArgAction::Append)]
    pub scene_dir: Vec<PathBuf>,
    /// Comma-separated seeds of scenes generated in memory from the scene flags.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Comma-separated regularization strengths.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = DEFAULT_LAMBDAS)]
    pub lambdas: Vec<f64>,
    /// Comma-separated kernel scales, used for both sigma and sigma-height.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = DEFAULT_SIGMAS)]
    pub sigmas: Vec<f64>,
    /// Comma-separated weight kinds [default: all].
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, value_parser = parse_kind)]
    pub kinds: Vec<WeightKind>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Key-value file supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    /// Directory of true abundance_XX.raster planes.
    #[arg(long)]
    pub truth_dir: PathBuf,
    /// Directory of estimated abundance_XX.raster planes.
    #[arg(long)]
    pub estimate_dir: PathBuf,
    /// 0/1 raster selecting the pixels of the edge RMSE.
    #[arg(long)]
    pub edge_mask: Option<PathBuf>,
    /// Report file; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key-value file supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Failure of argument parsing or of the command itself.
#[derive(Debug)]
pub enum CliError {
    Args(clap::Error),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Args(e)
    }
}

/// Value of the first `--config` flag after the subcommand.
fn config_path(raw: &[String]) -> Option<PathBuf> {
    let mut args = raw.iter().skip(2);
    while let Some(a) = args.next() {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return args.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Parses `args` (program name first) and folds in the `--config` file.
pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let raw: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let Some(path) = config_path(&raw) else {
        return Ok(Cli::try_parse_from(&raw)?);
    };
    let path = path.as_path();
    let config = RunConfig::read(path)?;
    // no global flags, so raw[1] is the subcommand
    let name = &raw[1];
    let command = Cli::command();
    let Some(sub) = command.find_subcommand(name) else {
        return Ok(Cli::try_parse_from(&raw)?);
    };
    let known: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).collect();
    let given = |key: &str| {
        let flag = format!("--{key}");
        raw[2..]
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut merged = vec![raw[0].clone(), name.clone()];
    for (key, value) in &config.entries {
        if key == "config" || key == "help" || !known.contains(&key.as_str()) {
            return Err(Error::Usage(format!(
                "unknown key '{key}' in {} for command {name}",
                path.display()
            ))
            .into());
        }
        if !given(key) {
            merged.push(format!("--{key}"));
            merged.push(value.clone());
        }
    }
    merged.extend_from_slice(&raw[2..]);
    Ok(Cli::try_parse_from(merged)?)
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let outcome = parse_args(args).and_then(|cli| run(&cli).map_err(CliError::Run));
    match outcome {
        Ok(()) => 0,
        Err(CliError::Args(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Unmix(a) => cmd_unmix(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (spec, library) = a.scene.spec(a.seed)?;
    let scene = generate_scene(&spec, library)?;
    create_dir(&a.out_dir)?;
    write_scene(&a.out_dir, &scene)?;
    let mut cfg = RunConfig::default();
    a.scene.record(&mut cfg);
    cfg.push("seed", a.seed);
    cfg.write(
        &a.out_dir.join(MANIFEST_FILE),
        &format!(
            "hsi-unmix simulate\nedge threshold {}\nclass heights {}",
            spec.default_edge_threshold(),
            join(&spec.class_heights)
        ),
    )
}

/// Writes every component of `scene` into `dir`.
pub fn write_scene(dir: &Path, scene: &Scene) -> Result<()> {
    let dims = scene.spec.dims;
    write_cube(&dir.join(CUBE_FILE), &scene.cube)?;
    write_abundances(dir, &scene.truth_abundances)?;
    write_raster(&dir.join(DSM_FILE), dims, scene.dsm.heights())?;
    write_raster(&dir.join(DSM_CLEAN_FILE), dims, scene.dsm_clean.heights())?;
    write_raster(&dir.join(EDGE_MASK_FILE), dims, &mask_values(&scene.edge_mask))?;
    let labels: Vec<f64> = scene.labels.iter().map(|&l| l as f64).collect();
    write_raster(&dir.join(LABELS_FILE), dims, &labels)?;
    write_endmembers_csv(&dir.join(ENDMEMBER_FILE), &scene.endmembers)
}

pub fn write_abundances(dir: &Path, a: &AbundanceImage) -> Result<()> {
    for m in 0..a.count() {
        write_raster(&dir.join(abundance_file(m)), a.dims(), &a.plane(m))?;
    }
    Ok(())
}

/// Reads `abundance_00.raster`, `abundance_01.raster`, ... up to the first
/// missing index.
pub fn read_abundances(dir: &Path) -> Result<AbundanceImage> {
    let mut planes = Vec::new();
    let mut dims = None;
    while dir.join(abundance_file(planes.len())).is_file() {
        let path = dir.join(abundance_file(planes.len()));
        let (d, values) = read_raster(&path)?;
        if dims.is_some_and(|first| first != d) {
            return Err(Error::validation(format!(
                "{} has a different grid from {}",
                path.display(),
                abundance_file(0)
            )));
        }
        dims = Some(d);
        planes.push(values);
    }
    let dims = dims.ok_or_else(|| {
        Error::Usage(format!("no {} in {}", abundance_file(0), dir.display()))
    })?;
    let data = DMatrix::from_fn(planes.len(), dims.len(), |m, i| planes[m][i]);
    AbundanceImage::unconstrained(dims, data)
}

fn read_dsm(path: &Path) -> Result<SurfaceModel> {
    let (dims, heights) = read_raster(path)?;
    SurfaceModel::from_heights(dims, heights)
}

fn weight_config(kind: WeightKind, sigma: f64, sigma_height: f64) -> Result<WeightConfig> {
    let cfg = WeightConfig::new(
        kind,
        if kind.uses_primary_sigma() { sigma } else { 1.0 },
        if kind.uses_dsm() { sigma_height } else { 1.0 },
    )?;
    Ok(cfg)
}

pub fn cmd_weights(a: &WeightsArgs) -> Result<()> {
    let cube = a.cube.as_deref().map(read_cube).transpose()?;
    let dsm = a.dsm.as_deref().map(read_dsm).transpose()?;
    let abundances = a.abundance_dir.as_deref().map(read_abundances).transpose()?;
    let dims = cube
        .as_ref()
        .map(SpectralCube::dims)
        .or(dsm.as_ref().map(SurfaceModel::dims))
        .or(abundances.as_ref().map(AbundanceImage::dims))
        .ok_or_else(|| Error::Usage("one of --cube, --dsm, --abundance-dir is required".into()))?;
    let cfg = weight_config(a.kind, a.sigma, a.sigma_height)?;
    let weights = compute_weights(
        dims,
        &cfg,
        GuidanceSources {
            cube: cube.as_ref(),
            dsm: dsm.as_ref(),
            abundances: abundances.as_ref(),
        },
    )?;
    create_dir(&a.out_dir)?;
    let mut summary = String::from("direction,edges,min,mean,max\n");
    let mut all = Vec::new();
    for d in Direction::ALL {
        write_raster(
            &a.out_dir.join(format!("weights_{}.raster", d.name())),
            dims,
            weights.plane(d),
        )?;
        let values: Vec<f64> = weights
            .edges()
            .filter(|&(_, dir, _, _)| dir == d)
            .map(|(_, _, _, w)| w)
            .collect();
        summary_row(&mut summary, d.name(), &values);
        all.extend(values);
    }
    summary_row(&mut summary, "all", &all);
    write_text(&a.out_dir.join("weights_summary.csv"), &summary)?;
    print!("{summary}");

    let mut cfg = RunConfig::default();
    cfg.push("kind", a.kind);
    for (key, path) in [
        ("cube", &a.cube),
        ("dsm", &a.dsm),
        ("abundance-dir", &a.abundance_dir),
    ] {
        if let Some(p) = path {
            cfg.push(key, p.display());
        }
    }
    cfg.push("sigma", a.sigma);
    cfg.push("sigma-height", a.sigma_height);
    cfg.write(&a.out_dir.join(MANIFEST_FILE), "hsi-unmix weights")
}

fn summary_row(out: &mut String, name: &str, values: &[f64]) {
    if values.is_empty() {
        let _ = writeln!(out, "{name},0,,,");
        return;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let _ = writeln!(out, "{name},{},{min},{mean},{max}", values.len());
}

pub fn cmd_unmix(a: &UnmixArgs) -> Result<()> {
    let kind = a.weight_kind;
    let dsm = match (&a.dsm, kind.uses_dsm()) {
        (None, true) => {
            return Err(Error::Usage(format!("weight kind {kind} requires --dsm")));
        }
        (Some(_), false) => {
            return Err(Error::Usage(format!("weight kind {kind} does not take --dsm")));
        }
        (Some(p), true) => Some(read_dsm(p)?),
        (None, false) => None,
    };
    let cube = read_cube(&a.cube)?;
    let endmembers = read_endmembers_csv(&a.endmembers)?;
    let cfg = weight_config(kind, a.sigma, a.sigma_height)?;
    let opts = a.solver.options(a.lambda);
    let result = solve(&cube, &endmembers, dsm.as_ref(), &cfg, &opts)?;

    create_dir(&a.out_dir)?;
    write_abundances(&a.out_dir, &result.abundances)?;
    write_text(&a.out_dir.join(TRACE_FILE), &trace_csv(&result))?;
    let mut m = RunConfig::default();
    m.push("cube", a.cube.display());
    m.push("endmembers", a.endmembers.display());
    m.push("weight-kind", kind);
    if let Some(p) = &a.dsm {
        m.push("dsm", p.display());
    }
    m.push("lambda", a.lambda);
    m.push("sigma", a.sigma);
    m.push("sigma-height", a.sigma_height);
    a.solver.record(&mut m);
    m.write(
        &a.out_dir.join(MANIFEST_FILE),
        &format!(
            "hsi-unmix unmix\niterations {}\nconverged {}\nouter iterations {}",
            result.iterations_used, result.converged, result.outer_iterations
        ),
    )
}

/// Single ADMM solve, or the reweighted loop for abundance-based kinds.
pub fn solve(
    cube: &SpectralCube,
    endmembers: &EndmemberLibrary,
    dsm: Option<&SurfaceModel>,
    cfg: &WeightConfig,
    opts: &SolverOptions,
) -> Result<UnmixResult> {
    if cfg.kind.uses_abundances() {
        return reweighted_unmix(cube, endmembers, dsm, cfg, opts);
    }
    let weights = compute_weights(
        cube.dims(),
        cfg,
        GuidanceSources {
            cube: Some(cube),
            dsm,
            abundances: None,
        },
    )?;
    unmix(cube, endmembers, &build_difference_operator(weights)?, opts)
}

/// `iteration,objective,primal_residual,dual_residual`, iterations counted
/// across reweighting rounds.
pub fn trace_csv(result: &UnmixResult) -> String {
    let mut out = String::from("iteration,objective,primal_residual,dual_residual\n");
    for (k, (obj, res)) in result
        .objective_trace
        .iter()
        .zip(&result.residual_trace)
        .enumerate()
    {
        let _ = writeln!(out, "{},{obj},{},{}", k + 1, res.primal, res.dual);
    }
    out
}

/// A scene directory written by `simulate`.
struct LoadedScene {
    cube: SpectralCube,
    endmembers: EndmemberLibrary,
    dsm: Option<SurfaceModel>,
    truth: AbundanceImage,
    edge_mask: Vec<bool>,
}

impl LoadedScene {
    fn read(dir: &Path) -> Result<Self> {
        let dsm_path = dir.join(DSM_FILE);
        let dsm = if dsm_path.is_file() {
            Some(read_dsm(&dsm_path)?)
        } else {
            None
        };
        let (_, edge_mask) = read_mask(&dir.join(EDGE_MASK_FILE))?;
        Ok(Self {
            cube: read_cube(&dir.join(CUBE_FILE))?,
            endmembers: read_endmembers_csv(&dir.join(ENDMEMBER_FILE))?,
            dsm,
            truth: read_abundances(dir)?,
            edge_mask,
        })
    }

    fn from_scene(scene: Scene) -> Self {
        Self {
            cube: scene.cube,
            endmembers: scene.endmembers,
            dsm: Some(scene.dsm),
            truth: scene.truth_abundances,
            edge_mask: scene.edge_mask,
        }
    }

    fn inputs(&self) -> SweepInputs<'_> {
        SweepInputs {
            cube: &self.cube,
            endmembers: &self.endmembers,
            dsm: self.dsm.as_ref(),
            truth: &self.truth,
            edge_mask: &self.edge_mask,
        }
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    if a.scene_dir.is_empty() && a.seeds.is_empty() {
        return Err(Error::Usage("sweep needs --scene-dir or --seeds".into()));
    }
    let kinds = if a.kinds.is_empty() {
        WeightKind::ALL.to_vec()
    } else {
        a.kinds.clone()
    };
    let grid = SweepGrid {
        lambdas: a.lambdas.clone(),
        sigmas: a.sigmas.clone(),
        weight_kinds: kinds.clone(),
    };
    let opts = a.solver.options(0.0);

    let mut outcomes: Vec<(String, SweepOutcome)> = Vec::new();
    for dir in &a.scene_dir {
        let scene = LoadedScene::read(dir)?;
        outcomes.push((dir.display().to_string(), sweep(&scene.inputs(), &grid, &opts)?));
    }
    for &seed in &a.seeds {
        let (spec, library) = a.scene.spec(seed)?;
        let scene = LoadedScene::from_scene(generate_scene(&spec, library)?);
        outcomes.push((format!("seed{seed}"), sweep(&scene.inputs(), &grid, &opts)?));
    }

    create_dir(&a.out_dir)?;
    let plain: Vec<SweepOutcome> = outcomes.iter().map(|(_, o)| o.clone()).collect();
    let summary = summary_csv(&summarize(&plain, &kinds));
    write_text(&a.out_dir.join("records.csv"), &records_csv(&outcomes))?;
    write_text(&a.out_dir.join("summary.csv"), &summary)?;
    write_text(&a.out_dir.join("lambda_curves.csv"), &lambda_curves_csv(&plain, &kinds))?;
    if plain.len() > 1 {
        write_text(&a.out_dir.join("aggregate.csv"), &aggregate_csv(&plain))?;
    }
    print!("{summary}");

    let mut m = RunConfig::default();
    for dir in &a.scene_dir {
        m.push("scene-dir", dir.display());
    }
    if !a.seeds.is_empty() {
        m.push("seeds", join(&a.seeds));
        a.scene.record(&mut m);
    }
    m.push("lambdas", join(&a.lambdas));
    m.push("sigmas", join(&a.sigmas));
    m.push("kinds", join(&kinds));
    a.solver.record(&mut m);
    m.write(&a.out_dir.join(MANIFEST_FILE), "hsi-unmix sweep")?;

    if plain.iter().flat_map(|o| &o.records).any(|r| r.succeeded()) {
        Ok(())
    } else {
        Err(Error::Numerical("every sweep cell failed".into()))
    }
}

/// Fixed notation with six significant digits; zero prints as `0.000000`.
pub fn format_significant(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.6}", 0.0);
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let truth = read_abundances(&a.truth_dir)?;
    let estimate = read_abundances(&a.estimate_dir)?;
    let mut report = format!("rmse_whole,{}\n", format_significant(rmse_whole(&truth, &estimate)?));
    if let Some(path) = &a.edge_mask {
        let (_, mask) = read_mask(path)?;
        let edge = rmse_edge(&truth, &estimate, &mask)?;
        let _ = writeln!(report, "rmse_edge,{}", format_significant(edge));
    }
    print!("{report}");
    if let Some(out) = &a.out {
        write_text(out, &report)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0), "0.000000");
        assert_eq!(format_significant(0.1), "0.100000");
        assert_eq!(format_significant(0.0123456789), "0.0123457");
        assert_eq!(format_significant(0.35355339), "0.353553");
        assert_eq!(format_significant(2.5), "2.50000");
    }

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn list_flags_split_on_commas() {
        let cli = parse_args(["x", "sweep", "--seeds", "1,2", "--lambdas", "0.5", "--out-dir", "o"])
            .unwrap();
        let Command::Sweep(a) = cli.command else {
            panic!("wrong command")
        };
        assert_eq!(a.seeds, [1, 2]);
        assert_eq!(a.lambdas, [0.5]);
        assert_eq!(a.sigmas, DEFAULT_SIGMAS);
        assert!(a.kinds.is_empty());
    }

    #[test]
    fn repeated_flag_keeps_last() {
        let cli = parse_args(["x", "simulate", "--seed", "1", "--seed", "2", "--out-dir", "o"]).unwrap();
        let Command::Simulate(a) = cli.command else {
            panic!("wrong command")
        };
        assert_eq!(a.seed, 2);
    }

    #[test]
    fn config_values_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# test\nseed = 7\nheight = 12\nout-dir = from-file\n").unwrap();
        let cfg_arg = cfg.to_str().unwrap();
        let cli = parse_args(["x", "simulate", "--config", cfg_arg, "--seed", "3"]).unwrap();
        let Command::Simulate(a) = cli.command else {
            panic!("wrong command")
        };
        assert_eq!((a.seed, a.scene.height), (3, 12));
        assert_eq!(a.out_dir, PathBuf::from("from-file"));
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "sede = 7\n").unwrap();
        let err = parse_args(["x", "simulate", "--config", cfg.to_str().unwrap(), "--out-dir", "o"])
            .unwrap_err();
        match err {
            CliError::Run(e) => assert_eq!(e.exit_code(), 1),
            CliError::Args(e) => panic!("unexpected clap error {e}"),
        }
    }

    #[test]
    fn manifest_reproduces_simulation() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a");
        let second = dir.path().join("b");
        let first_arg = first.to_str().unwrap();
        let args = ["x", "simulate", "--height", "8", "--width", "9", "--bands", "12"];
        let mut argv: Vec<&str> = args.to_vec();
        argv.extend(["--num-endmembers", "3", "--regions", "3", "--seed", "4", "--out-dir", first_arg]);
        assert_eq!(main_with_args(argv), 0);
        let manifest = first.join(MANIFEST_FILE);
        let code = main_with_args([
            "x",
            "simulate",
            "--config",
            manifest.to_str().unwrap(),
            "--out-dir",
            second.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        for name in [CUBE_FILE, DSM_FILE, EDGE_MASK_FILE, ENDMEMBER_FILE, MANIFEST_FILE] {
            let a = std::fs::read(first.join(name)).unwrap();
            let b = std::fs::read(second.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }
}
