//! Benchmark harness: reconstruct the sparse subsampling of every case and
//! score the synthesized views against the dense ground truth.
//!
//! The CSV has one row per case and pipeline:
//!
//! ```text
//! case,pipeline,alpha_s,psnr_mean,ssim_mean,runtime_ms
//! ```
//!
//! `psnr_mean` (dB, 4 decimals) and `ssim_mean` (6 decimals) average the
//! per-view scores over synthesized views only; input views are never
//! scored. `runtime_ms` is wall time of the reconstruction, or `0` when
//! timing is disabled so that reruns are byte-identical.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lfaa_core::container::write_png;
use lfaa_core::metrics::{psnr, ssim};
use lfaa_core::recon::{reconstruct_multi, ReconConfig};
use lfaa_core::synth::coarse_views;
use lfaa_core::{reconstruct_4d, Epi, Grid2, LfError, LightField4D, Result};
use lfaa_danet::{Network, NetworkParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::suites::Case;

pub const CSV_HEADER: &str = "case,pipeline,alpha_s,psnr_mean,ssim_mean,runtime_ms";

/// Shear candidates used by the benchmark: every integer in `-9..=9`.
pub const BENCH_SHEAR_MAX: i32 = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Pipeline {
    Classical,
    Danet,
    Both,
}

impl Pipeline {
    fn names(self) -> &'static [&'static str] {
        match self {
            Pipeline::Classical => &["classical"],
            Pipeline::Danet => &["danet"],
            Pipeline::Both => &["classical", "danet"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    /// Per synthesized view, in `(s, t)` row-major order.
    pub psnr: Vec<f64>,
    pub psnr_mean: f64,
    pub ssim: Vec<f64>,
    pub ssim_mean: f64,
    /// Input views `(s, t)` on the dense grid.
    pub views_excluded: Vec<(usize, usize)>,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub case: String,
    pub pipeline: String,
    pub alpha_s: usize,
    pub report: MetricReport,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// `alpha_s` is taken from each case.
    pub recon: ReconConfig,
    pub network: Option<NetworkParams<f32>>,
    pub timing: bool,
    /// Per-view PNGs of every reconstruction go under `dump/<case>/<pipeline>`.
    pub dump: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            recon: ReconConfig::default().with_shears(ReconConfig::integer_shears(BENCH_SHEAR_MAX)),
            network: None,
            timing: true,
            dump: None,
        }
    }
}

fn step(views: usize, alpha_s: usize) -> usize {
    if views > 1 {
        alpha_s
    } else {
        1
    }
}

/// Whether dense view `(s, t)` is one of the inputs.
pub fn is_input_view(dense: &LightField4D, alpha_s: usize, s: usize, t: usize) -> bool {
    s.is_multiple_of(step(dense.views_s(), alpha_s)) && t.is_multiple_of(step(dense.views_t(), alpha_s))
}

/// The views a sparse capture of `dense` would contain.
pub fn sparse_from_dense(dense: &LightField4D, alpha_s: usize) -> Result<LightField4D> {
    let count = |n: usize| if n > 1 { coarse_views(n, alpha_s) } else { Ok(1) };
    let (ns, nt) = (count(dense.views_s())?, count(dense.views_t())?);
    let (ss, st) = (step(dense.views_s(), alpha_s), step(dense.views_t(), alpha_s));
    let mut lf = LightField4D::from_fn(dense.width(), dense.height(), ns, nt, |u, v, s, t| dense.get(u, v, s * ss, t * st))?;
    lf.disparity_hint = dense.disparity_hint;
    Ok(lf)
}

fn crop(img: &Grid2, (bu, bv): (usize, usize)) -> Grid2 {
    let (h, w) = img.shape();
    let (u0, u1) = if w > 2 * bu { (bu, w - bu) } else { (0, w) };
    let (v0, v1) = if h > 2 * bv { (bv, h - bv) } else { (0, h) };
    img.crop_cols(u0, u1).select_rows(&(v0..v1).collect::<Vec<_>>())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores the synthesized views of `out` against `dense`.
pub fn score(out: &LightField4D, dense: &LightField4D, alpha_s: usize, border: (usize, usize)) -> Result<MetricReport> {
    let dims = |lf: &LightField4D| (lf.width(), lf.height(), lf.views_s(), lf.views_t());
    if dims(out) != dims(dense) {
        return Err(LfError::Dimension(format!("output {:?} against truth {:?}", dims(out), dims(dense))));
    }
    let mut report = MetricReport {
        psnr: Vec::new(),
        psnr_mean: 0.0,
        ssim: Vec::new(),
        ssim_mean: 0.0,
        views_excluded: Vec::new(),
        runtime_ms: 0.0,
    };
    for t in 0..dense.views_t() {
        for s in 0..dense.views_s() {
            if is_input_view(dense, alpha_s, s, t) {
                report.views_excluded.push((s, t));
                continue;
            }
            let a = crop(&out.view(s, t), border);
            let b = crop(&dense.view(s, t), border);
            report.psnr.push(psnr(&a, &b, 1.0)?);
            report.ssim.push(ssim(&a, &b, 1.0)?);
        }
    }
    if report.psnr.is_empty() {
        return Err(LfError::Invalid("no synthesized views to score".into()));
    }
    report.psnr_mean = mean(&report.psnr);
    report.ssim_mean = mean(&report.ssim);
    Ok(report)
}

/// Reconstructs and scores one case with an arbitrary pipeline.
pub fn run_case<F>(case: &Case, timing: bool, reconstruct: F) -> Result<(LightField4D, MetricReport)>
where
    F: FnOnce(&LightField4D) -> Result<LightField4D>,
{
    let sparse = sparse_from_dense(&case.dense, case.info.alpha_s)?;
    let start = Instant::now();
    let out = reconstruct(&sparse)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut report = score(&out, &case.dense, case.info.alpha_s, case.info.border)?;
    report.runtime_ms = if timing { elapsed } else { 0.0 };
    Ok((out, report))
}

/// The classical pipeline at `alpha_s`.
pub fn classical(sparse: &LightField4D, recon: &ReconConfig, alpha_s: usize) -> Result<LightField4D> {
    let cfg = recon.clone().with_alpha_s(alpha_s);
    reconstruct_4d(sparse, |e| Ok(reconstruct_multi(e, &cfg)?.epi), alpha_s)
}

/// The network pipeline. The checkpoint fixes `alpha_s`.
pub fn danet(sparse: &LightField4D, params: &NetworkParams<f32>) -> Result<LightField4D> {
    let net = Network::new(params)?;
    reconstruct_4d(
        sparse,
        |e| {
            let out = net.forward(&params.params, &Epi::synthetic(e.samples.cast::<f32>()))?;
            Ok(e.with_samples(out.samples.cast()))
        },
        params.config.alpha_s,
    )
}

fn dump_views(dir: &Path, out: &LightField4D, alpha_s: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in 0..out.views_t() {
        for s in 0..out.views_s() {
            if !is_input_view(out, alpha_s, s, t) {
                write_png(&dir.join(format!("s{s:02}_t{t:02}.png")), &out.view(s, t), false)?;
            }
        }
    }
    Ok(())
}

fn run_pipeline(case: &Case, name: &str, cfg: &BenchConfig) -> Result<BenchRow> {
    let alpha_s = case.info.alpha_s;
    let (out, report) = match name {
        "danet" => {
            let params = cfg
                .network
                .as_ref()
                .ok_or_else(|| LfError::Invalid("the danet pipeline needs a checkpoint".into()))?;
            if params.config.alpha_s != alpha_s {
                return Err(LfError::Invalid(format!(
                    "case {} needs alpha_s {alpha_s}, checkpoint has {}",
                    case.info.name, params.config.alpha_s
                )));
            }
            run_case(case, cfg.timing, |sparse| danet(sparse, params))?
        }
        _ => run_case(case, cfg.timing, |sparse| classical(sparse, &cfg.recon, alpha_s))?,
    };
    if let Some(dir) = &cfg.dump {
        dump_views(&dir.join(&case.info.name).join(name), &out, alpha_s)?;
    }
    Ok(BenchRow { case: case.info.name.clone(), pipeline: name.to_string(), alpha_s, report })
}

/// Runs every case through the selected pipelines. Cases run concurrently;
/// rows come back in case order, pipelines in the order classical, danet.
pub fn benchmark(cases: &[Case], pipeline: Pipeline, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    for c in cases {
        c.info.validate()?;
    }
    let rows: Vec<Vec<BenchRow>> = cases
        .par_iter()
        .map(|c| pipeline.names().iter().map(|n| run_pipeline(c, n, cfg)).collect())
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.6},{:.3}\n",
            r.case, r.pipeline, r.alpha_s, r.report.psnr_mean, r.report.ssim_mean, r.report.runtime_ms
        ));
    }
    s
}

/// Mean of the per-case PSNR means.
pub fn suite_psnr(rows: &[BenchRow]) -> f64 {
    let v: Vec<f64> = rows.iter().map(|r| r.report.psnr_mean).collect();
    mean(&v)
}

/// Patch-level shear selection against banded ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelectionScore {
    pub hits: usize,
    pub total: usize,
}

impl SelectionScore {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// Candidate nearest `-d`, ties towards smaller `|α|`.
pub fn nearest_shear(shears: &[f64], d: f64) -> f64 {
    shears
        .iter()
        .copied()
        .min_by(|a, b| {
            let (ea, eb) = ((a + d).abs(), (b + d).abs());
            ea.total_cmp(&eb).then(a.abs().total_cmp(&b.abs()))
        })
        .unwrap_or(0.0)
}

/// Counts fusion patches that pick the shear nearest `-d`, over patches at
/// least `margin` pixels inside a band. Every image row is one EPI.
pub fn selection_score(case: &Case, recon: &ReconConfig, margin: usize) -> Result<SelectionScore> {
    let alpha_s = case.info.alpha_s;
    let cfg = recon.clone().with_alpha_s(alpha_s);
    let sparse = sparse_from_dense(&case.dense, alpha_s)?;
    let scores = (0..sparse.height())
        .into_par_iter()
        .map(|v| {
            let rec = reconstruct_multi(&sparse.extract_epi_horizontal(v, 0)?, &cfg)?;
            let mut sc = SelectionScore::default();
            for (p, &chosen) in rec.selected.iter().enumerate() {
                let (lo, hi) = (p * cfg.patch, (p + 1) * cfg.patch);
                let Some(band) = case.info.bands.iter().find(|b| lo >= b.start + margin && hi + margin <= b.end) else {
                    continue;
                };
                sc.total += 1;
                sc.hits += usize::from(chosen == nearest_shear(&cfg.shears, band.disparity));
            }
            Ok(sc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.into_iter().fold(SelectionScore::default(), |a, b| SelectionScore {
        hits: a.hits + b.hits,
        total: a.total + b.total,
    }))
}
