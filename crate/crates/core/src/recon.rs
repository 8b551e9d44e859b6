//! Classical anti-aliased EPI reconstruction.
//!
//! Each candidate shears the sparse EPI by `α_h`, splits it into a Laplacian
//! pyramid, prefilters every level against the reference alias of the sheared
//! spectrum, upsamples the views with cubic interpolation, collapses the
//! pyramid and undoes the shear. Candidates are fused per spatial patch by a
//! consistency score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::lightfield::{upsampled_views, Epi};
use crate::pyramid::{
    downsample_angular_nearest, laplacian_decompose, laplacian_reconstruct, upsample_angular_cubic,
};
use crate::scalar::Scalar;
use crate::shear::{shear_grid_about, unshear_grid_about};
use crate::spectral::{
    design_prefilter, dominant_slope, grid_spectrum, locate_reference_alias,
    AliasStatus, PrefilterSpec, SlopeSearch, SpectralSupport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    SelectBestPatch,
    GlobalBest,
}

impl std::str::FromStr for Fusion {
    type Err = LfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "select_best_patch" => Ok(Self::SelectBestPatch),
            "global_best" => Ok(Self::GlobalBest),
            _ => Err(LfError::Invalid(format!("unknown fusion mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Candidate shears in pixels per input view, sorted ascending.
    pub shears: Vec<f64>,
    pub alpha_s: usize,
    /// Alias amplitude tolerated after prefiltering, in percent of the
    /// strongest non-DC spectral magnitude.
    pub gamma: f64,
    pub factors: Vec<usize>,
    pub fusion: Fusion,
    /// Fusion patch width in pixels.
    pub patch: usize,
    /// Width of the linear cross-fade between patches.
    pub overlap: usize,
    /// Assumed non-Lambertian band half-width (rad per input view).
    pub beta_over_z: f64,
    /// Largest prefilter σ, in full-resolution pixels.
    pub sigma_cap: f64,
    /// Width of the windows over which prefilters are designed, in pixels.
    /// Windows overlap by half; 0 designs one set for the whole EPI.
    pub tile: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            shears: vec![-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0],
            alpha_s: 4,
            gamma: 10.0,
            factors: vec![4, 2, 1],
            fusion: Fusion::SelectBestPatch,
            patch: 16,
            overlap: 8,
            beta_over_z: 0.0,
            sigma_cap: 4.0,
            tile: 32,
        }
    }
}

impl ReconConfig {
    pub fn with_shears(mut self, shears: Vec<f64>) -> Self {
        self.shears = shears;
        self
    }

    pub fn with_alpha_s(mut self, alpha_s: usize) -> Self {
        self.alpha_s = alpha_s;
        self
    }

    /// Integer shears `-max..=max`.
    pub fn integer_shears(max: i32) -> Vec<f64> {
        (-max..=max).map(f64::from).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.shears.is_empty() || self.shears.iter().any(|a| !a.is_finite()) {
            return Err(LfError::Invalid("shear list must be non-empty and finite".into()));
        }
        if self.shears.windows(2).any(|w| w[0] > w[1]) {
            return Err(LfError::Invalid("shear list must be sorted".into()));
        }
        if self.alpha_s < 2 {
            return Err(LfError::Invalid("alpha_s must be >= 2".into()));
        }
        if !(self.gamma > 0.0) || !(self.sigma_cap > 0.0) || !(self.beta_over_z >= 0.0) {
            return Err(LfError::Invalid("gamma, sigma_cap and beta_over_z out of range".into()));
        }
        if self.patch == 0 || self.overlap > self.patch {
            return Err(LfError::Invalid("patch must be >= 1 and >= overlap".into()));
        }
        if self.tile != 0 && self.tile < 16 {
            return Err(LfError::Invalid(format!("tile {} is narrower than 16 pixels", self.tile)));
        }
        Ok(())
    }

    /// Largest residual disparity once the nearest shear is applied.
    pub fn residual_bound(&self) -> f64 {
        self.shears
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(0.5, f64::max)
    }
}

/// Anchor view of the shear. Integer so that integer shears move every row by
/// whole pixels for odd view counts too.
pub fn shear_anchor(views: usize) -> f64 {
    (views / 2) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelFilter {
    pub factor: usize,
    pub spec: PrefilterSpec,
}

/// Prefilters designed for one analysis window.
#[derive(Clone, Debug, PartialEq)]
pub struct TileFilters {
    /// Window centre in full-resolution columns.
    pub center: f64,
    /// Residual disparity the filters were designed for.
    pub residual: f64,
    /// Coherence of the window along its own dominant slope.
    pub coherence: f64,
    /// One filter per pyramid level, coarsest first.
    pub levels: Vec<LevelFilter>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReconWarning {
    /// The alias sits at DC; the prefilter was capped.
    Unfilterable { alpha_h: f64, factor: usize },
}

/// One single-shear reconstruction.
#[derive(Clone, Debug)]
pub struct Candidate<T = f64> {
    pub alpha_h: f64,
    /// Unsheared output with the input rows re-inserted.
    pub output: Epi<T>,
    /// Unsheared output before re-insertion.
    pub raw: Grid2<T>,
    /// Dense reconstruction in the sheared frame.
    pub sheared: Grid2<T>,
    /// Prefilter design per analysis window, left to right.
    pub tiles: Vec<TileFilters>,
    pub warnings: Vec<ReconWarning>,
}

impl<T> Candidate<T> {
    /// Median of the per-window residual disparities.
    pub fn residual_disparity(&self) -> f64 {
        let mut r: Vec<f64> = self.tiles.iter().map(|t| t.residual).collect();
        r.sort_by(f64::total_cmp);
        match r.len() {
            0 => 0.0,
            n if n % 2 == 1 => r[n / 2],
            n => 0.5 * (r[n / 2 - 1] + r[n / 2]),
        }
    }
}

fn check_input<T: Scalar>(epi: &Epi<T>, cfg: &ReconConfig) -> Result<()> {
    cfg.validate()?;
    if epi.angular() < 2 {
        return Err(LfError::Invalid("reconstruction needs at least 2 views".into()));
    }
    let coarsest = cfg.factors.first().copied().unwrap_or(1);
    if epi.spatial() < 2 * coarsest {
        return Err(LfError::Dimension(format!(
            "{} pixels is too narrow for pyramid factor {coarsest}",
            epi.spatial()
        )));
    }
    if !epi.samples.is_finite() {
        return Err(LfError::NonFinite("reconstruction input".into()));
    }
    Ok(())
}

/// Convolves each row with symmetric `taps`, replicating edge samples.
pub fn filter_rows<T: Scalar>(x: &Grid2<T>, taps: &[f64]) -> Grid2<T> {
    if taps.len() <= 1 {
        return x.clone();
    }
    let h = (taps.len() / 2) as isize;
    let cols = x.cols() as isize;
    let w: Vec<T> = taps.iter().map(|&t| T::of(t)).collect();
    let mut out = Grid2::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let src = x.row(r);
        let dst = out.row_mut(r);
        for (u, o) in dst.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (k, &wk) in w.iter().enumerate() {
                let j = (u as isize + k as isize - h).clamp(0, cols - 1) as usize;
                acc = acc + wk * src[j];
            }
            *o = acc;
        }
    }
    out
}

/// Designs one prefilter per pyramid level for one window of a sheared input.
fn design_level_filters<T: Scalar>(
    sheared: &Grid2<T>,
    cfg: &ReconConfig,
    alpha_h: f64,
    warnings: &mut Vec<ReconWarning>,
) -> Result<(f64, f64, Vec<LevelFilter>)> {
    let epi = Epi::synthetic(sheared.clone());
    let (residual, coherence) = if epi.angular() >= 4 {
        let search = SlopeSearch::for_width(epi.spatial());
        match dominant_slope(&epi, search) {
            // A slope at the edge of the search may lie beyond it.
            Ok((d, _)) if d.abs() >= search.max_abs - search.step => (d, 0.0),
            Ok(d) => d,
            Err(LfError::UndefinedSlope) => (0.0, 0.0),
            Err(e) => return Err(e),
        }
    } else {
        (cfg.residual_bound(), 1.0)
    };
    let a = cfg.alpha_s as f64;
    let support = SpectralSupport::new(residual / a, cfg.beta_over_z / a, 1.0)?;
    let dense = crate::spectral::zero_insert_angular(&epi, cfg.alpha_s)?;
    let spectrum = grid_spectrum(&dense.samples)?;
    let report = locate_reference_alias(&spectrum, &support, cfg.alpha_s)?;

    let mut filters = Vec::with_capacity(cfg.factors.len());
    for &f in &cfg.factors {
        let spec = if report.status == AliasStatus::Clean {
            PrefilterSpec::identity(cfg.gamma)
        } else {
            let gamma = cfg.gamma / 100.0 * report.peak;
            match design_prefilter(&report, gamma, f as f64) {
                Ok(s) if s.sigma * f as f64 <= cfg.sigma_cap => s,
                Ok(s) => capped(cfg, f, s.gamma),
                Err(LfError::Unfilterable { gamma, .. }) => {
                    let w = ReconWarning::Unfilterable { alpha_h, factor: f };
                    if !warnings.contains(&w) {
                        warnings.push(w);
                    }
                    capped(cfg, f, gamma)
                }
                Err(e) => return Err(e),
            }
        };
        filters.push(LevelFilter { factor: f, spec });
    }
    Ok((residual, coherence, filters))
}

/// Analysis windows `[start, end)` of `cfg.tile` pixels at a hop of half a
/// window, the last one flush with the right edge.
pub fn design_windows(cols: usize, tile: usize) -> Vec<(usize, usize)> {
    if tile == 0 || cols <= tile {
        return vec![(0, cols)];
    }
    let hop = tile / 2;
    let mut out: Vec<(usize, usize)> = (0..).map(|i| i * hop).take_while(|&a| a + tile < cols).map(|a| (a, a + tile)).collect();
    out.push((cols - tile, cols));
    out
}

/// Smallest coherence at which a window trusts its own slope estimate.
pub const LOCAL_COHERENCE: f64 = 0.5;

/// Per-window designs. A window whose views do not line up along its own
/// dominant slope, typically because the residual carries lines out of it,
/// falls back to the design for the whole row.
fn design_tiles<T: Scalar>(sheared: &Grid2<T>, cfg: &ReconConfig, alpha_h: f64) -> Result<(Vec<TileFilters>, Vec<ReconWarning>)> {
    let mut warnings = Vec::new();
    let cols = sheared.cols();
    let (whole_residual, whole_coherence, whole) = design_level_filters(sheared, cfg, alpha_h, &mut warnings)?;
    let windows = design_windows(cols, cfg.tile);
    if windows.len() == 1 {
        let center = 0.5 * cols as f64 - 0.5;
        let tile = TileFilters { center, residual: whole_residual, coherence: whole_coherence, levels: whole };
        return Ok((vec![tile], warnings));
    }
    let mut tiles = Vec::with_capacity(windows.len());
    for (a, b) in windows {
        let mut local = Vec::new();
        let (residual, coherence, levels) = design_level_filters(&sheared.crop_cols(a, b), cfg, alpha_h, &mut local)?;
        let center = 0.5 * (a + b) as f64 - 0.5;
        tiles.push(if coherence >= LOCAL_COHERENCE {
            for w in local {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            TileFilters { center, residual, coherence, levels }
        } else {
            TileFilters { center, residual: whole_residual, coherence, levels: whole.clone() }
        });
    }
    Ok((tiles, warnings))
}

/// Filters pyramid level `k`, whose columns are `factor` full-resolution
/// pixels apart, blending the designs of neighbouring windows linearly
/// between their centres.
fn filter_level<T: Scalar>(x: &Grid2<T>, tiles: &[TileFilters], k: usize, factor: usize) -> Grid2<T> {
    if tiles.len() == 1 {
        return filter_rows(x, &tiles[0].levels[k].spec.taps);
    }
    let taps: Vec<Vec<T>> = tiles.iter().map(|t| t.levels[k].spec.taps.iter().map(|&v| T::of(v)).collect()).collect();
    let cols = x.cols() as isize;
    let at = |row: &[T], u: usize, w: &[T]| {
        let h = (w.len() / 2) as isize;
        w.iter().enumerate().fold(T::zero(), |acc, (j, &wj)| {
            acc + wj * row[(u as isize + j as isize - h).clamp(0, cols - 1) as usize]
        })
    };
    let mut out = Grid2::zeros(x.rows(), x.cols());
    for u in 0..x.cols() {
        // Full-resolution position of level column u.
        let pos = (u as f64 + 0.5) * factor as f64 - 0.5;
        let (i, w) = match tiles.iter().rposition(|t| t.center <= pos) {
            None => (0, 0.0),
            Some(j) if j + 1 == tiles.len() => (j, 0.0),
            Some(j) => (j, (pos - tiles[j].center) / (tiles[j + 1].center - tiles[j].center)),
        };
        for r in 0..x.rows() {
            let row = x.row(r);
            let mut v = at(row, u, &taps[i]);
            if w > 0.0 {
                v = T::of(1.0 - w) * v + T::of(w) * at(row, u, &taps[i + 1]);
            }
            out.set(r, u, v);
        }
    }
    out
}

fn capped(cfg: &ReconConfig, factor: usize, gamma: f64) -> PrefilterSpec {
    let sigma = cfg.sigma_cap / factor as f64;
    PrefilterSpec {
        sigma,
        sigma_bound: sigma,
        gamma,
        omega: 0.0,
        removed_by_downscale: false,
        taps: crate::spectral::gaussian_kernel(sigma, crate::spectral::prefilter_half_width(sigma)),
    }
}

/// Shear, per-level prefilter, angular upsampling and unshear for one `α_h`.
pub fn reconstruct_single_shear<T: Scalar>(epi: &Epi<T>, alpha_h: f64, cfg: &ReconConfig) -> Result<Candidate<T>> {
    check_input(epi, cfg)?;
    let anchor = shear_anchor(epi.angular());
    let sheared = shear_grid_about(&epi.samples, alpha_h, anchor)?;
    let (tiles, warnings) = design_tiles(&sheared, cfg, alpha_h)?;

    let mut pyr = laplacian_decompose(&sheared, &cfg.factors)?;
    pyr.base = upsample_angular_cubic(&filter_level(&pyr.base, &tiles, 0, cfg.factors[0]), cfg.alpha_s)?;
    for (k, res) in pyr.residuals.iter_mut().enumerate() {
        *res = upsample_angular_cubic(&filter_level(res, &tiles, k + 1, cfg.factors[k + 1]), cfg.alpha_s)?;
    }
    let dense = laplacian_reconstruct(&pyr)?;
    let raw = unshear_grid_about(&dense, alpha_h, cfg.alpha_s, anchor)?;
    if !raw.is_finite() {
        return Err(LfError::NonFinite(format!("candidate alpha_h = {alpha_h}")));
    }
    let mut out = raw.clone();
    insert_input_rows(&mut out, &epi.samples, cfg.alpha_s);
    Ok(Candidate {
        alpha_h,
        output: epi.with_samples(out),
        raw,
        sheared: dense,
        tiles,
        warnings,
    })
}

fn insert_input_rows<T: Scalar>(dst: &mut Grid2<T>, src: &Grid2<T>, alpha_s: usize) {
    for s in 0..src.rows() {
        dst.row_mut(s * alpha_s).copy_from_slice(src.row(s));
    }
}

/// Weight of the smoothness term in [`consistency_error`].
pub const SMOOTHNESS_WEIGHT: f64 = 0.1;

fn patch_count(cols: usize, patch: usize) -> usize {
    cols.div_ceil(patch)
}

/// Per-patch score of a dense candidate.
///
/// `raw` is the candidate in the output frame and `frame` the same
/// reconstruction in the frame where it was interpolated. The score of a
/// patch is the mean absolute difference between the rows of `raw` at input
/// positions and the input, plus 0.1 times the mean absolute second
/// difference of `frame` along the views.
pub fn patch_errors<T: Scalar>(raw: &Grid2<T>, frame: &Grid2<T>, input: &Grid2<T>, alpha_s: usize, patch: usize) -> Result<Vec<f64>> {
    if alpha_s == 0 || patch == 0 {
        return Err(LfError::Invalid("alpha_s and patch must be >= 1".into()));
    }
    if raw.rows() != upsampled_views(input.rows(), alpha_s) || raw.cols() != input.cols() {
        return Err(LfError::Dimension(format!(
            "candidate {:?} does not match input {:?} at alpha_s = {alpha_s}",
            raw.shape(),
            input.shape()
        )));
    }
    raw.check_same_shape(frame)?;
    let picked = downsample_angular_nearest(raw, alpha_s, 0)?;
    let n = patch_count(input.cols(), patch);
    let mut data = vec![0.0; n];
    let mut smooth = vec![0.0; n];
    for s in 0..input.rows() {
        for (u, (&a, &b)) in picked.row(s).iter().zip(input.row(s)).enumerate() {
            data[u / patch] += (a - b).abs().to_f64_lossy();
        }
    }
    let rows = frame.rows();
    for s in 1..rows.saturating_sub(1) {
        let (p, c, q) = (frame.row(s - 1), frame.row(s), frame.row(s + 1));
        for u in 0..frame.cols() {
            let dd = p[u] - c[u] - c[u] + q[u];
            smooth[u / patch] += dd.abs().to_f64_lossy();
        }
    }
    let smooth_rows = rows.saturating_sub(2).max(1) as f64;
    Ok((0..n)
        .map(|p| {
            let width = (patch.min(input.cols() - p * patch)) as f64;
            data[p] / (input.rows() as f64 * width) + SMOOTHNESS_WEIGHT * smooth[p] / (smooth_rows * width)
        })
        .collect())
}

/// Per-patch consistency of a dense candidate with the sparse input.
///
/// The smoothness term is measured after shearing the candidate back into
/// the frame of `alpha_h` (pass 0 to measure it in the output frame).
pub fn consistency_error<T: Scalar>(
    candidate: &Epi<T>,
    input: &Epi<T>,
    alpha_s: usize,
    patch: usize,
    alpha_h: f64,
) -> Result<Vec<f64>> {
    if alpha_s == 0 {
        return Err(LfError::Invalid("alpha_s must be >= 1".into()));
    }
    let frame = if alpha_h == 0.0 {
        candidate.samples.clone()
    } else {
        let center = shear_anchor(input.angular()) * alpha_s as f64;
        shear_grid_about(&candidate.samples, alpha_h / alpha_s as f64, center)?
    };
    patch_errors(&candidate.samples, &frame, &input.samples, alpha_s, patch)
}

/// Result of [`reconstruct_multi`].
#[derive(Clone, Debug)]
pub struct Reconstruction<T = f64> {
    pub epi: Epi<T>,
    /// Chosen shear for every patch.
    pub selected: Vec<f64>,
    /// `errors[i][p]`: score of candidate `i` on patch `p`.
    pub errors: Vec<Vec<f64>>,
    pub warnings: Vec<ReconWarning>,
}

impl<T: Scalar> Reconstruction<T> {
    /// Sum of the selected candidates' patch scores.
    pub fn selected_error(&self, shears: &[f64]) -> f64 {
        self.selected
            .iter()
            .enumerate()
            .map(|(p, a)| {
                let i = shears.iter().position(|s| s == a).unwrap_or(0);
                self.errors[i][p]
            })
            .sum()
    }
}

/// Index of the smallest score, ties towards smaller `|α_h|`.
fn argmin(scores: impl Iterator<Item = (usize, f64)>, shears: &[f64]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in scores {
        best = match best {
            None => Some((i, e)),
            Some((b, be)) if e < be || (e == be && shears[i].abs() < shears[b].abs()) => Some((i, e)),
            keep => keep,
        };
    }
    best.map_or(0, |b| b.0)
}

/// Runs every candidate shear and fuses the results.
pub fn reconstruct_multi<T: Scalar>(epi: &Epi<T>, cfg: &ReconConfig) -> Result<Reconstruction<T>> {
    check_input(epi, cfg)?;
    let candidates = cfg
        .shears
        .par_iter()
        .map(|&a| reconstruct_single_shear(epi, a, cfg))
        .collect::<Result<Vec<_>>>()?;
    let errors = candidates
        .iter()
        .map(|c| patch_errors(&c.raw, &c.sheared, &epi.samples, cfg.alpha_s, cfg.patch))
        .collect::<Result<Vec<_>>>()?;
    let warnings: Vec<ReconWarning> = candidates.iter().flat_map(|c| c.warnings.clone()).collect();
    let n = errors[0].len();

    let choice: Vec<usize> = match cfg.fusion {
        Fusion::SelectBestPatch => (0..n)
            .map(|p| argmin(errors.iter().map(|e| e[p]).enumerate(), &cfg.shears))
            .collect(),
        Fusion::GlobalBest => {
            let i = argmin(errors.iter().map(|e| e.iter().sum::<f64>()).enumerate(), &cfg.shears);
            vec![i; n]
        }
    };

    let mut out = blend(&candidates.iter().map(|c| &c.raw).collect::<Vec<_>>(), &choice, cfg.patch, cfg.overlap);
    insert_input_rows(&mut out, &epi.samples, cfg.alpha_s);
    Ok(Reconstruction {
        epi: epi.with_samples(out),
        selected: choice.iter().map(|&i| cfg.shears[i]).collect(),
        errors,
        warnings,
    })
}

/// Stitches candidate patches with linear ramps of `overlap` pixels centred
/// on the patch boundaries.
fn blend<T: Scalar>(cands: &[&Grid2<T>], choice: &[usize], patch: usize, overlap: usize) -> Grid2<T> {
    let (rows, cols) = cands[0].shape();
    let mut out = Grid2::zeros(rows, cols);
    let half = overlap as f64 / 2.0;
    for u in 0..cols {
        let p = u / patch;
        let x = u as f64 + 0.5;
        // Blend partner and its weight, if `u` lies in a ramp.
        let mut mix: Option<(usize, f64)> = None;
        if overlap > 0 {
            let left = (p * patch) as f64;
            let right = ((p + 1) * patch) as f64;
            if p > 0 && x < left + half {
                mix = Some((p - 1, 0.5 - (x - left) / overlap as f64));
            } else if p + 1 < choice.len() && x > right - half {
                mix = Some((p + 1, 0.5 - (right - x) / overlap as f64));
            }
        }
        let own = cands[choice[p]];
        for r in 0..rows {
            let v = match mix {
                Some((q, w)) if choice[q] != choice[p] => {
                    let w = T::of(w);
                    (T::one() - w) * own.get(r, u) + w * cands[choice[q]].get(r, u)
                }
                _ => own.get(r, u),
            };
            out.set(r, u, v);
        }
    }
    out
}
