//! The `lfaa` command line.
//!
//! Relative output paths are resolved against `--out-dir`; input paths are
//! taken as given. Exit status is [`EXIT_OK`], [`EXIT_VALIDATION`] for bad
//! arguments, configurations or files, and [`EXIT_NUMERICAL`] when a
//! computation produced non-finite values or could not meet its target.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use lfaa_core::container::{read_light_field, write_light_field, write_png, write_png_normalized, ViewFormat};
use lfaa_core::recon::{reconstruct_multi, reconstruct_single_shear, Fusion, ReconConfig};
use lfaa_core::spectral::{
    curve_from_csv, curve_to_csv, estimate_dominant_disparity, grid_spectrum, locate_reference_alias,
    sigma_alpha_curve, zero_insert_angular, AliasStatus, AliasingReport, SigmaPoint, SpectralSupport,
};
use lfaa_core::synth::{fig2_preset, make_training_set, render_epi, PatchPair, ScenePoint, TrainingSetConfig};
use lfaa_core::{DisparityRange, Epi, LfError, LightField4D};
use lfaa_danet::{checkpoint, train, train_from, NetworkParams, TrainConfig, TrainError};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchConfig, Pipeline};
use crate::suites::{self, stack_epis, Suite};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Default worker count when `--threads` is not given.
pub const THREADS_ENV: &str = "LFAA_THREADS";

pub const CURVE_GAMMAS: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 25.0];
pub const CURVE_ALPHA_US: [f64; 5] = [1.0, 1.5, 2.0, 3.0, 4.0];
/// Alias amplitude of the reference curve, in percent of the spectral peak.
pub const CURVE_AMPLITUDE: f64 = 100.0;
/// Alias frequency of the reference curve before downscaling (rad/pixel).
pub const CURVE_OMEGA: f64 = 0.5;
pub const CURVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub enum CliError {
    Lf(LfError),
    Train(TrainError),
    /// Output disagrees with a reference.
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let numerical = match self {
            CliError::Lf(e) => e.is_numerical(),
            CliError::Train(e) => e.error.is_numerical(),
            CliError::Mismatch(_) => true,
        };
        if numerical {
            EXIT_NUMERICAL
        } else {
            EXIT_VALIDATION
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lf(e) => write!(f, "{e}"),
            CliError::Train(e) => write!(f, "training failed: {e}"),
            CliError::Mismatch(m) => write!(f, "mismatch: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<LfError> for CliError {
    fn from(e: LfError) -> Self {
        CliError::Lf(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lf(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lf(e.into())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Lf(LfError::Invalid(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "lfaa", version, about = "Anti-aliased light field reconstruction")]
pub struct Cli {
    /// Seed for scenes, datasets and training; overrides seeds in config files
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: one per core]
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Base directory for relative output paths
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic scenes, benchmark suites or training patches
    Synth(SynthArgs),
    /// Spectrum, reference alias and prefilter table of one EPI
    Analyze(AnalyzeArgs),
    /// Classical multi-shear reconstruction of a light field
    Reconstruct(ReconstructArgs),
    /// Train the network on synthetic patches and write a checkpoint
    Train(TrainArgs),
    /// Reconstruct a light field with a trained checkpoint
    Infer(InferArgs),
    /// Benchmark pipelines on a dataset and write a CSV table
    Eval(EvalArgs),
    /// Prefilter sigma against the downscaling factor, as CSV
    Curve(CurveArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Png8,
    Png16,
    Pfm,
}

impl From<Format> for ViewFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Png8 => ViewFormat::Png8,
            Format::Png16 => ViewFormat::Png16,
            Format::Pfm => ViewFormat::Pfm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig2,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scene", "preset", "suite", "training"])))]
pub struct SynthArgs {
    /// Scene description (JSON with `points`, optional `background`, `views`, `cols`)
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Write a benchmark dataset
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Write training patches; `--config` may hold a training-set configuration
    #[arg(long)]
    pub training: bool,
    #[arg(long, requires = "training")]
    pub config: Option<PathBuf>,
    /// Output container or dataset directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long, value_enum, default_value = "pfm")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Image row of the EPI [default: middle]
    #[arg(long)]
    pub row: Option<usize>,
    /// Camera row of the EPI [default: middle]
    #[arg(long)]
    pub camera_row: Option<usize>,
    /// Angular upsampling factor the capture is analysed for
    #[arg(long, default_value_t = 4)]
    pub alpha_s: usize,
    /// Dominant disparity in pixels per input view [default: estimated]
    #[arg(long, allow_negative_numbers = true)]
    pub disparity: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub beta_over_z: f64,
    /// Alias tolerances in percent of the spectral peak
    #[arg(long, value_delimiter = ',', default_values_t = CURVE_GAMMAS)]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = CURVE_ALPHA_US)]
    pub alpha_us: Vec<f64>,
    /// Output directory for spectrum.png, alias_report.csv and sigma_alpha.csv
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub alpha_s: usize,
    /// Candidate shears in pixels per input view
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub shears: Option<Vec<f64>>,
    /// Alias tolerance in percent of the spectral peak
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    #[arg(long, default_value = "select_best_patch", value_parser = parse_fusion)]
    pub fusion: Fusion,
    #[arg(long, default_value_t = 0.0)]
    pub beta_over_z: f64,
    /// Write every candidate of the middle EPI as PNG
    #[arg(long)]
    pub dump_candidates: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pfm")]
    pub format: Format,
}

fn parse_fusion(s: &str) -> std::result::Result<Fusion, String> {
    s.parse().map_err(|e: LfError| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON with optional `train`, `data` and `finetune` sections
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV
    #[arg(long, default_value = "train_trace.csv")]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "pfm")]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("cases").required(true).args(["dataset", "suite"])))]
pub struct EvalArgs {
    /// Dataset written by `synth --suite`
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Generate a suite in memory instead
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[arg(long, value_enum, default_value = "classical")]
    pub pipeline: Pipeline,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value = "benchmark.csv")]
    pub out: PathBuf,
    /// Report runtime_ms as 0 so reruns are byte-identical
    #[arg(long)]
    pub no_timing: bool,
    /// Per-view PNG dumps of every reconstruction
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub shears: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_delimiter = ',', default_values_t = CURVE_GAMMAS)]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = CURVE_ALPHA_US)]
    pub alpha_us: Vec<f64>,
    /// Alias amplitude in percent of the spectral peak
    #[arg(long, default_value_t = CURVE_AMPLITUDE)]
    pub amplitude: f64,
    /// Alias frequency before downscaling, rad/pixel
    #[arg(long, default_value_t = CURVE_OMEGA)]
    pub omega: f64,
    #[arg(long, default_value = "sigma_curve.csv")]
    pub out: PathBuf,
    /// Fail unless the curve matches this CSV within 1e-9
    #[arg(long)]
    pub check: Option<PathBuf>,
}

/// Scene file accepted by `synth --scene`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub points: Vec<ScenePoint>,
    #[serde(default)]
    pub background: f64,
    pub views: Option<usize>,
    pub cols: Option<usize>,
}

/// Configuration accepted by `train --config`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub train: TrainConfig,
    pub data: TrainingSetConfig,
    pub finetune: FineTune,
}

/// Second phase on pseudo-EPIs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTune {
    pub steps: usize,
    pub lr_rest: f64,
    pub lr_prefilter: f64,
}

impl Default for FineTune {
    fn default() -> Self {
        Self { steps: 0, lr_rest: 2.5e-4, lr_prefilter: 2.5e-5 }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs a parsed command on its own thread pool.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli))
}

struct Ctx<'a> {
    out_dir: &'a Path,
    seed: Option<u64>,
}

impl Ctx<'_> {
    /// Output path under `--out-dir`, with its parent created.
    fn out(&self, p: &Path) -> Result<PathBuf> {
        let path = if p.is_absolute() { p.to_path_buf() } else { self.out_dir.join(p) };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    /// Output directory under `--out-dir`, created.
    fn dir(&self, p: &Path) -> Result<PathBuf> {
        let path = if p.is_absolute() { p.to_path_buf() } else { self.out_dir.join(p) };
        fs::create_dir_all(&path)?;
        Ok(path)
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = Ctx { out_dir: &cli.out_dir, seed: cli.seed };
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Analyze(a) => analyze(&ctx, a),
        Command::Reconstruct(a) => reconstruct(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Infer(a) => infer(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Curve(a) => curve(&ctx, a),
    }
}

fn epi_field(epi: &Epi, points: &[ScenePoint]) -> Result<LightField4D> {
    let mut lf = stack_epis(std::slice::from_ref(epi))?;
    if !points.is_empty() {
        let lo = points.iter().map(|p| p.d).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.d).fold(f64::NEG_INFINITY, f64::max);
        lf.disparity_hint = Some(DisparityRange::new(lo, hi)?);
    }
    Ok(lf)
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let out = ctx.out(&a.out)?;
    let format = ViewFormat::from(a.format);
    if let Some(suite) = a.suite {
        let cases = suites::generate(suite, ctx.seed.unwrap_or(0))?;
        suites::write_dataset(&out, &cases, format)?;
        println!("wrote {} cases to {}", cases.len(), out.display());
        return Ok(());
    }
    if a.training {
        return synth_training(ctx, a, &out, format);
    }
    let (points, background, views, cols) = match &a.scene {
        Some(path) => {
            let scene: SceneFile = serde_json::from_str(&fs::read_to_string(path)?)?;
            (scene.points, scene.background, a.views.or(scene.views).unwrap_or(9), a.cols.or(scene.cols).unwrap_or(128))
        }
        None => (fig2_preset(), 0.0, a.views.unwrap_or(9), a.cols.unwrap_or(128)),
    };
    let epi = if background == 0.0 {
        render_epi(&points, views, cols)?
    } else {
        let scene = lfaa_core::synth::Scene::new(points.clone(), background, views as f64 / 2.0)?;
        lfaa_core::synth::render_scene_epi(&scene, views, cols)?
    };
    write_light_field(&out, &epi_field(&epi, &points)?, format)?;
    println!("wrote {views}x{cols} EPI to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct PatchEntry {
    phase: &'static str,
    index: usize,
    disparity: f64,
}

fn synth_training(ctx: &Ctx, a: &SynthArgs, out: &Path, format: ViewFormat) -> Result<()> {
    let mut cfg: TrainingSetConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => TrainingSetConfig::default(),
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let set = make_training_set(&cfg)?;
    let mut index = Vec::new();
    for (phase, patches) in [("regular", &set.regular), ("pseudo", &set.pseudo)] {
        if patches.is_empty() {
            continue;
        }
        let inputs: Vec<Epi> = patches.iter().map(|p| p.input.clone()).collect();
        let labels: Vec<Epi> = patches.iter().map(|p| p.label.clone()).collect();
        write_light_field(&out.join(phase).join("input"), &stack_epis(&inputs)?, format)?;
        write_light_field(&out.join(phase).join("label"), &stack_epis(&labels)?, format)?;
        index.extend(patches.iter().enumerate().map(|(i, p)| PatchEntry { phase, index: i, disparity: p.disparity }));
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("patches.json"), serde_json::to_string_pretty(&index)?)?;
    println!("wrote {} regular and {} pseudo patches to {}", set.regular.len(), set.pseudo.len(), out.display());
    Ok(())
}

fn middle_epi(lf: &LightField4D, row: Option<usize>, camera_row: Option<usize>) -> Result<Epi> {
    let v = row.unwrap_or(lf.height() / 2);
    let t = camera_row.unwrap_or(lf.views_t() / 2);
    Ok(lf.extract_epi_horizontal(v, t)?)
}

fn analyze(ctx: &Ctx, a: &AnalyzeArgs) -> Result<()> {
    if a.alpha_s < 2 {
        return Err(invalid("--alpha-s must be at least 2"));
    }
    let lf = read_light_field(&a.input)?;
    let epi = middle_epi(&lf, a.row, a.camera_row)?;
    let d = match a.disparity {
        Some(d) => d,
        None => estimate_dominant_disparity(&epi)?,
    };
    let step = a.alpha_s as f64;
    let support = SpectralSupport::with_ratio(d / step, a.beta_over_z / step)?;
    let spectrum = grid_spectrum(&zero_insert_angular(&epi, a.alpha_s)?.samples)?;
    let report = locate_reference_alias(&spectrum, &support, a.alpha_s)?;
    let pct = if report.peak > 0.0 { 100.0 * report.amplitude / report.peak } else { 0.0 };

    let dir = ctx.dir(&a.out)?;
    write_png_normalized(&dir.join("spectrum.png"), &spectrum.log_magnitude())?;
    let status = match report.status {
        AliasStatus::Aliased => "aliased",
        AliasStatus::Clean => "clean",
    };
    fs::write(
        dir.join("alias_report.csv"),
        format!(
            "disparity,omega_u_pa,omega_s_pa,amplitude,peak,amplitude_pct,replica_index,overlap_detected,status\n{},{},{},{},{},{},{},{},{}\n",
            d, report.omega_u_pa, report.omega_s_pa, report.amplitude, report.peak, pct, report.replica_index, report.overlap_detected, status
        ),
    )?;
    let points = if report.status == AliasStatus::Aliased {
        let gammas: Vec<f64> = a.gammas.iter().copied().filter(|&g| g <= pct).collect();
        if gammas.len() < a.gammas.len() {
            eprintln!("note: gammas above the alias amplitude ({pct:.2}%) need no prefilter and are skipped");
        }
        let normalized = AliasingReport { amplitude: pct, ..report };
        sigma_alpha_curve(&normalized, &gammas, &a.alpha_us)?
    } else {
        Vec::new()
    };
    fs::write(dir.join("sigma_alpha.csv"), curve_to_csv(&points))?;
    println!(
        "disparity {d:.3}, alias at omega_u {:.4} ({pct:.2}% of peak, {status}), overlap {}",
        report.omega_u_pa, report.overlap_detected
    );
    Ok(())
}

fn recon_config(shears: &Option<Vec<f64>>, alpha_s: usize, gamma: f64) -> Result<ReconConfig> {
    let mut cfg = ReconConfig::default().with_alpha_s(alpha_s);
    if let Some(s) = shears {
        let mut s = s.clone();
        s.sort_by(f64::total_cmp);
        cfg.shears = s;
    }
    cfg.gamma = gamma;
    cfg.validate()?;
    Ok(cfg)
}

fn reconstruct(ctx: &Ctx, a: &ReconstructArgs) -> Result<()> {
    let mut cfg = recon_config(&a.shears, a.alpha_s, a.gamma)?;
    cfg.fusion = a.fusion;
    cfg.beta_over_z = a.beta_over_z;
    cfg.validate()?;
    let lf = read_light_field(&a.input)?;
    if let Some(dir) = &a.dump_candidates {
        dump_candidates(&ctx.dir(dir)?, &lf, &cfg)?;
    }
    let out = bench::classical(&lf, &cfg, a.alpha_s)?;
    let path = ctx.out(&a.out)?;
    write_light_field(&path, &out, a.format.into())?;
    println!("wrote {}x{} views to {}", out.views_s(), out.views_t(), path.display());
    Ok(())
}

/// Candidates, fused result and patch choices for the middle horizontal EPI.
fn dump_candidates(dir: &Path, lf: &LightField4D, cfg: &ReconConfig) -> Result<()> {
    let epi = middle_epi(lf, None, None)?;
    for (i, &alpha) in cfg.shears.iter().enumerate() {
        let c = reconstruct_single_shear(&epi, alpha, cfg)?;
        write_png(&dir.join(format!("candidate_{i:02}_{alpha}.png")), &c.output.samples, false)?;
    }
    let rec = reconstruct_multi(&epi, cfg)?;
    write_png(&dir.join("fused.png"), &rec.epi.samples, false)?;
    let mut csv = String::from("patch,shear\n");
    for (p, s) in rec.selected.iter().enumerate() {
        csv.push_str(&format!("{p},{s}\n"));
    }
    fs::write(dir.join("selected.csv"), csv)?;
    Ok(())
}

fn write_trace(path: &Path, phases: &[(&str, &[f64])]) -> Result<()> {
    let mut csv = String::from("step,phase,loss\n");
    let mut step = 0;
    for (phase, trace) in phases {
        for l in *trace {
            csv.push_str(&format!("{step},{phase},{l}\n"));
            step += 1;
        }
    }
    fs::write(path, csv)?;
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let mut file: TrainFile = serde_json::from_str(&fs::read_to_string(&a.config)?)?;
    if let Some(s) = ctx.seed {
        file.train.seed = s;
        file.data.seed = s;
    }
    file.train.validate()?;
    if file.data.alpha_s != file.train.alpha_s {
        return Err(invalid(format!(
            "data alpha_s {} differs from network alpha_s {}",
            file.data.alpha_s, file.train.alpha_s
        )));
    }
    if file.data.regular_count == 0 {
        return Err(invalid("training needs regular patches"));
    }
    if file.finetune.steps > 0 && file.data.pseudo_count == 0 {
        return Err(invalid("fine-tuning needs pseudo patches"));
    }
    let finetune = TrainConfig {
        steps: file.finetune.steps,
        lr_rest: file.finetune.lr_rest,
        lr_prefilter: file.finetune.lr_prefilter,
        ..file.train.clone()
    };
    if file.finetune.steps > 0 {
        finetune.validate()?;
    }
    let trace_path = ctx.out(&a.trace)?;
    let set = make_training_set(&file.data)?;
    let first = train::<f32>(&file.train, &set.regular).map_err(|e| {
        let _ = write_trace(&trace_path, &[("regular", &e.trace)]);
        CliError::Train(e)
    })?;
    let (params, second) = if file.finetune.steps > 0 {
        let pseudo: &[PatchPair] = &set.pseudo;
        match train_from(first.params, &finetune, pseudo) {
            Ok(o) => (o.params, o.trace),
            Err(e) => {
                let _ = write_trace(&trace_path, &[("regular", &first.trace), ("pseudo", &e.trace)]);
                return Err(CliError::Train(e));
            }
        }
    } else {
        (first.params, Vec::new())
    };
    write_trace(&trace_path, &[("regular", &first.trace), ("pseudo", &second)])?;
    let path = ctx.out(&a.out)?;
    checkpoint::save(&params, &path)?;
    let last = second.last().or(first.trace.last()).copied().unwrap_or(f64::NAN);
    println!(
        "trained {} + {} steps, final loss {last:.5}; checkpoint {}",
        first.trace.len(),
        second.len(),
        path.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<NetworkParams<f32>> {
    Ok(checkpoint::load(path)?)
}

fn infer(ctx: &Ctx, a: &InferArgs) -> Result<()> {
    let params = load_checkpoint(&a.ckpt)?;
    let lf = read_light_field(&a.input)?;
    let out = bench::danet(&lf, &params)?;
    let path = ctx.out(&a.out)?;
    write_light_field(&path, &out, a.format.into())?;
    println!("wrote {}x{} views to {}", out.views_s(), out.views_t(), path.display());
    Ok(())
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let cases = match (&a.dataset, a.suite) {
        (Some(dir), _) => suites::read_dataset(dir)?,
        (None, Some(s)) => suites::generate(s, ctx.seed.unwrap_or(0))?,
        (None, None) => unreachable!("clap requires a dataset or a suite"),
    };
    let mut cfg = BenchConfig {
        timing: !a.no_timing,
        dump: a.dump.as_deref().map(|d| ctx.dir(d)).transpose()?,
        ..BenchConfig::default()
    };
    if let Some(s) = &a.shears {
        cfg.recon = recon_config(&Some(s.clone()), cfg.recon.alpha_s, a.gamma)?;
    }
    cfg.recon.gamma = a.gamma;
    if matches!(a.pipeline, Pipeline::Danet | Pipeline::Both) {
        let path = a.ckpt.as_ref().ok_or_else(|| invalid("--ckpt is required for the danet pipeline"))?;
        cfg.network = Some(load_checkpoint(path)?);
    }
    let rows = bench::benchmark(&cases, a.pipeline, &cfg)?;
    let path = ctx.out(&a.out)?;
    fs::write(&path, bench::to_csv(&rows))?;
    for r in &rows {
        println!("{:<20} {:<9} {:8.3} dB  ssim {:.4}", r.case, r.pipeline, r.report.psnr_mean, r.report.ssim_mean);
    }
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

/// Closed-form σ over `(γ, α_u)` for an alias of `amplitude` percent at `omega`.
pub fn sigma_curve(amplitude: f64, omega: f64, gammas: &[f64], alpha_us: &[f64]) -> Result<Vec<SigmaPoint>> {
    if !(omega.is_finite() && omega != 0.0) {
        return Err(invalid("--omega must be finite and non-zero"));
    }
    Ok(sigma_alpha_curve(&AliasingReport::from_values(omega, amplitude), gammas, alpha_us)?)
}

/// Compares two curves point by point.
pub fn compare_curves(got: &[SigmaPoint], want: &[SigmaPoint], tol: f64) -> Result<()> {
    if got.len() != want.len() {
        return Err(CliError::Mismatch(format!("{} points against {}", got.len(), want.len())));
    }
    for (g, w) in got.iter().zip(want) {
        if g.gamma != w.gamma || g.alpha_u != w.alpha_u || !((g.sigma - w.sigma).abs() <= tol) {
            return Err(CliError::Mismatch(format!("{g:?} against {w:?}")));
        }
    }
    Ok(())
}

fn curve(ctx: &Ctx, a: &CurveArgs) -> Result<()> {
    let points = sigma_curve(a.amplitude, a.omega, &a.gammas, &a.alpha_us)?;
    let path = ctx.out(&a.out)?;
    fs::write(&path, curve_to_csv(&points))?;
    if let Some(reference) = &a.check {
        compare_curves(&points, &curve_from_csv(&fs::read_to_string(reference)?)?, CURVE_TOLERANCE)?;
        println!("curve matches {}", reference.display());
    }
    println!("wrote {} points to {}", points.len(), path.display());
    Ok(())
}
