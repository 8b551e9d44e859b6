//! Synthetic benchmark suites with dense ground truth.
//!
//! The EPI suites stack independent scenes as the image rows `v` of a light
//! field with a single view along `t`. Each view is then an ordinary image,
//! so the same scoring code serves EPI and 4D cases.

use std::fs;
use std::path::Path;

use lfaa_core::container::{read_light_field, write_light_field, ViewFormat};
use lfaa_core::lightfield::upsampled_views;
use lfaa_core::spectral::{spectra_overlap, SpectralSupport};
use lfaa_core::synth::{random_blobs, render_dense_oracle, render_light_field_oracle, textured_points, ScenePoint};
use lfaa_core::{DisparityRange, Epi, LfError, LightField4D, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sparse views per EPI.
pub const EPI_VIEWS: usize = 6;
pub const EPI_COLS: usize = 256;
/// Independent scenes per EPI case. SSIM needs at least 11 rows.
pub const EPI_ROWS: usize = 12;
pub const EPI_ALPHA_S: usize = 4;
/// Columns ignored at either side of an EPI case.
pub const EPI_BORDER: usize = 48;
pub const EPI_CASES: usize = 15;
/// Disparity range of the EPI suites, pixels per sparse view.
pub const EPI_DISPARITY: (f64, f64) = (-7.0, 7.0);
/// Modulation bandwidths of the non-Lambertian suite, all below the overlap
/// limit at [`EPI_ALPHA_S`].
pub const NON_LAMBERTIAN_BETA: [f64; 3] = [0.25, 0.5, 0.75];

pub const SELECTION_BAND: usize = 128;
pub const SELECTION_BANDS: usize = 3;
pub const SELECTION_CASES: usize = 6;

pub const FIELD_SIZE: usize = 96;
pub const FIELD_VIEWS: usize = 3;
pub const FIELD_ALPHA_S: usize = 3;
pub const FIELD_BORDER: usize = 16;
pub const FIELD_BLOBS: usize = 40;
pub const FIELD_CASES: usize = 4;
pub const FIELD_DISPARITY: f64 = 3.0;

/// Index file of an on-disk dataset.
pub const INDEX: &str = "index.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lambertian,
    NonLambertian,
    Selection,
    #[value(name = "4d")]
    #[serde(rename = "4d")]
    FourD,
}

/// Columns `[start, end)` rendered at one disparity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub start: usize,
    pub end: usize,
    pub disparity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseInfo {
    pub name: String,
    pub alpha_s: usize,
    /// Pixels ignored at the `(u, v)` borders when scoring.
    pub border: (usize, usize),
    #[serde(default)]
    pub bands: Vec<Band>,
    #[serde(default)]
    pub beta_over_z: f64,
}

impl CaseInfo {
    pub fn validate(&self) -> Result<()> {
        let bad = |c: char| c == ',' || c == '"' || c == '/' || c == '\\' || c.is_control();
        if self.name.is_empty() || self.name.contains(bad) || self.name.starts_with('.') {
            return Err(LfError::Invalid(format!("case name {:?}", self.name)));
        }
        if self.alpha_s < 2 {
            return Err(LfError::Invalid(format!("case {}: alpha_s {}", self.name, self.alpha_s)));
        }
        Ok(())
    }
}

/// A dense ground-truth light field and how to score it.
#[derive(Clone, Debug)]
pub struct Case {
    pub info: CaseInfo,
    pub dense: LightField4D,
}

pub fn generate(suite: Suite, seed: u64) -> Result<Vec<Case>> {
    match suite {
        Suite::Lambertian => epi_suite("lambertian", seed, |_| 0.0),
        Suite::NonLambertian => epi_suite("non_lambertian", seed, |i| NON_LAMBERTIAN_BETA[i % NON_LAMBERTIAN_BETA.len()]),
        Suite::Selection => selection_suite(seed),
        Suite::FourD => field_suite(seed),
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stacks dense EPIs of equal shape as the rows of a light field.
pub fn stack_epis(epis: &[Epi]) -> Result<LightField4D> {
    let first = epis.first().ok_or_else(|| LfError::Invalid("no EPIs to stack".into()))?;
    let (views, cols) = first.samples.shape();
    if epis.iter().any(|e| e.samples.shape() != (views, cols)) {
        return Err(LfError::Dimension("stacked EPIs differ in shape".into()));
    }
    LightField4D::from_fn(cols, epis.len(), views, 1, |u, v, s, _| epis[v].samples.get(s, u))
}

fn hint(bands: &[Band]) -> Result<Option<DisparityRange>> {
    let lo = bands.iter().map(|b| b.disparity).fold(f64::INFINITY, f64::min);
    let hi = bands.iter().map(|b| b.disparity).fold(f64::NEG_INFINITY, f64::max);
    if bands.is_empty() {
        Ok(None)
    } else {
        DisparityRange::new(lo, hi).map(Some)
    }
}

fn modulate(pts: &mut [ScenePoint], rng: &mut ChaCha8Rng, beta_over_z: f64) {
    if beta_over_z > 0.0 {
        for p in pts {
            p.intensity = p.intensity.min(0.7);
            *p = p.with_modulation(beta_over_z, 0.3, rng.random());
        }
    }
}

/// One disparity per case, stratified over [`EPI_DISPARITY`].
fn epi_suite(prefix: &str, seed: u64, beta: impl Fn(usize) -> f64) -> Result<Vec<Case>> {
    let s_hr = upsampled_views(EPI_VIEWS, EPI_ALPHA_S);
    let (lo, hi) = EPI_DISPARITY;
    let mut cases = Vec::with_capacity(EPI_CASES);
    for i in 0..EPI_CASES {
        let mut rng = rng_for(seed, (i * (EPI_ROWS + 1)) as u64);
        let d = lo + (hi - lo) * (i as f64 + rng.random_range(0.0..1.0)) / EPI_CASES as f64;
        let bz = beta(i);
        if spectra_overlap(&SpectralSupport::with_ratio(d, bz)?, EPI_ALPHA_S) {
            return Err(LfError::Invalid(format!("beta/Z {bz} overlaps at step {EPI_ALPHA_S}")));
        }
        let rows = (0..EPI_ROWS)
            .map(|r| {
                let mut rng = rng_for(seed, (i * (EPI_ROWS + 1) + r + 1) as u64);
                let mut pts = textured_points(&mut rng, EPI_COLS, EPI_VIEWS, d, (8.0, 16.0), 1.2);
                modulate(&mut pts, &mut rng, bz);
                render_dense_oracle(&pts, s_hr, EPI_COLS, EPI_ALPHA_S).map(|(_, hr)| hr)
            })
            .collect::<Result<Vec<_>>>()?;
        let bands = vec![Band { start: 0, end: EPI_COLS, disparity: d }];
        let mut dense = stack_epis(&rows)?;
        dense.disparity_hint = hint(&bands)?;
        cases.push(Case {
            info: CaseInfo {
                name: format!("{prefix}_{i:02}"),
                alpha_s: EPI_ALPHA_S,
                border: (EPI_BORDER, 0),
                bands,
                beta_over_z: bz,
            },
            dense,
        });
    }
    Ok(cases)
}

/// Piecewise-constant disparity: [`SELECTION_BANDS`] side-by-side textures.
fn selection_suite(seed: u64) -> Result<Vec<Case>> {
    let s_hr = upsampled_views(EPI_VIEWS, EPI_ALPHA_S);
    let cols = SELECTION_BAND * SELECTION_BANDS;
    let (lo, hi) = EPI_DISPARITY;
    let mut cases = Vec::with_capacity(SELECTION_CASES);
    for i in 0..SELECTION_CASES {
        let stream = 1_000_000 + (i * (EPI_ROWS + 1)) as u64;
        let mut rng = rng_for(seed, stream);
        let bands: Vec<Band> = (0..SELECTION_BANDS)
            .map(|b| Band {
                start: b * SELECTION_BAND,
                end: (b + 1) * SELECTION_BAND,
                disparity: rng.random_range(lo..=hi),
            })
            .collect();
        let rows = (0..EPI_ROWS)
            .map(|r| {
                let mut rng = rng_for(seed, stream + r as u64 + 1);
                let mut pts = Vec::new();
                for b in &bands {
                    let (a, z) = (b.start as f64, b.end as f64);
                    let mut u = a + rng.random_range(0.0..8.0);
                    while u < z {
                        pts.push(ScenePoint::lambertian(u, b.disparity, rng.random_range(0.2..0.8)));
                        u += rng.random_range(8.0..16.0);
                    }
                }
                render_dense_oracle(&pts, s_hr, cols, EPI_ALPHA_S).map(|(_, hr)| hr)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut dense = stack_epis(&rows)?;
        dense.disparity_hint = hint(&bands)?;
        cases.push(Case {
            info: CaseInfo {
                name: format!("selection_{i:02}"),
                alpha_s: EPI_ALPHA_S,
                border: (EPI_BORDER, 0),
                bands,
                beta_over_z: 0.0,
            },
            dense,
        });
    }
    Ok(cases)
}

/// 3x3 sparse light fields of Gaussian blobs.
fn field_suite(seed: u64) -> Result<Vec<Case>> {
    (0..FIELD_CASES)
        .map(|i| {
            let mut rng = rng_for(seed, 2_000_000 + i as u64);
            let blobs = random_blobs(&mut rng, (FIELD_SIZE, FIELD_SIZE), FIELD_BLOBS, (-FIELD_DISPARITY, FIELD_DISPARITY));
            let (_, mut dense) = render_light_field_oracle(
                &blobs,
                0.1,
                (FIELD_SIZE, FIELD_SIZE),
                (FIELD_VIEWS, FIELD_VIEWS),
                FIELD_ALPHA_S,
            )?;
            dense.disparity_hint = Some(DisparityRange::new(-FIELD_DISPARITY, FIELD_DISPARITY)?);
            Ok(Case {
                info: CaseInfo {
                    name: format!("field_{i:02}"),
                    alpha_s: FIELD_ALPHA_S,
                    border: (FIELD_BORDER, FIELD_BORDER),
                    bands: Vec::new(),
                    beta_over_z: 0.0,
                },
                dense,
            })
        })
        .collect()
}

/// Writes every case as a container under `dir/<name>` plus [`INDEX`].
pub fn write_dataset(dir: &Path, cases: &[Case], format: ViewFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    for c in cases {
        c.info.validate()?;
        write_light_field(&dir.join(&c.info.name), &c.dense, format)?;
    }
    let infos: Vec<&CaseInfo> = cases.iter().map(|c| &c.info).collect();
    fs::write(dir.join(INDEX), serde_json::to_string_pretty(&infos)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Case>> {
    let infos: Vec<CaseInfo> = serde_json::from_str(&fs::read_to_string(dir.join(INDEX))?)?;
    infos
        .into_iter()
        .map(|info| {
            info.validate()?;
            let dense = read_light_field(&dir.join(&info.name))?;
            Ok(Case { info, dense })
        })
        .collect()
}
