//! Synthetic scenes with exact ground truth at arbitrary fractional views.
//!
//! Positions and disparities are in pixels and pixels per view step. A point
//! at `u0` sits at `u0 - d·(s - c)` in view `s`, where `c` is the centre view.
//! Points are composited in list order, so later points occlude earlier ones.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::lightfield::{upsampled_views, Epi, LightField4D, Provenance};
use crate::pyramid::{downsample_angular_nearest, keys_kernel};

pub const DEFAULT_WIDTH: f64 = 1.2;
const MOD_COMPONENTS: usize = 6;

fn default_width() -> f64 {
    DEFAULT_WIDTH
}

/// A scene point tracing one line in the EPI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub u0: f64,
    pub d: f64,
    pub intensity: f64,
    /// Standard deviation of the Gaussian footprint in pixels.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Highest angular frequency of the intensity modulation (rad per view).
    #[serde(default)]
    pub beta_over_z: f64,
    #[serde(default)]
    pub mod_depth: f64,
    #[serde(default)]
    pub mod_seed: u64,
}

impl ScenePoint {
    pub fn lambertian(u0: f64, d: f64, intensity: f64) -> Self {
        Self {
            u0,
            d,
            intensity,
            width: DEFAULT_WIDTH,
            beta_over_z: 0.0,
            mod_depth: 0.0,
            mod_seed: 0,
        }
    }

    pub fn with_modulation(mut self, beta_over_z: f64, mod_depth: f64, seed: u64) -> Self {
        self.beta_over_z = beta_over_z;
        self.mod_depth = mod_depth;
        self.mod_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.u0.is_finite()
            && self.d.is_finite()
            && self.intensity > 0.0
            && self.intensity <= 1.0
            && self.width > 0.0
            && self.beta_over_z >= 0.0
            && self.beta_over_z.is_finite()
            && (0.0..1.0).contains(&self.mod_depth)
            && self.intensity * (1.0 + self.mod_depth) <= 1.0 + 1e-12;
        if ok {
            Ok(())
        } else {
            Err(LfError::Invalid(format!("scene point {self:?}")))
        }
    }
}

/// Band-limited signal `Σ a_j cos(ω_j s + φ_j)` with `Σ|a_j| = 1` and every
/// `ω_j ≤ cutoff`.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulation {
    terms: Vec<(f64, f64, f64)>,
}

impl Modulation {
    pub fn none() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn random(cutoff: f64, seed: u64) -> Self {
        if cutoff <= 0.0 {
            return Self::none();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms: Vec<(f64, f64, f64)> = (0..MOD_COMPONENTS)
            .map(|_| {
                let a: f64 = rng.random_range(0.2..1.0);
                let w = cutoff * rng.random_range(0.05..=1.0);
                let phi = rng.random_range(0.0..2.0 * PI);
                (a, w, phi)
            })
            .collect();
        let norm: f64 = terms.iter().map(|t| t.0).sum();
        for t in &mut terms {
            t.0 /= norm;
        }
        Self { terms }
    }

    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.1).fold(0.0, f64::max)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.terms.iter().map(|&(a, w, p)| a * (w * s + p).cos()).sum()
    }
}

/// Anything that can be sampled at a continuous `(u, s)` coordinate.
pub trait EpiSource: Sync {
    /// Intensities of view `s` at pixels `0..cols`.
    fn sample_row(&self, s: f64, cols: usize, out: &mut [f64]);
}

#[inline]
fn composite(out: &mut [f64], pos: f64, width: f64, value: f64) {
    let reach = 6.0 * width;
    let lo = (pos - reach).floor().max(0.0) as usize;
    let hi = ((pos + reach).ceil()).min(out.len() as f64 - 1.0);
    if hi < 0.0 {
        return;
    }
    let inv = 1.0 / (2.0 * width * width);
    for (u, o) in out.iter_mut().enumerate().take(hi as usize + 1).skip(lo) {
        let x = u as f64 - pos;
        let w = (-x * x * inv).exp();
        *o = *o * (1.0 - w) + value * w;
    }
}

/// A list of points over a constant background.
#[derive(Clone, Debug)]
pub struct Scene {
    points: Vec<ScenePoint>,
    mods: Vec<Modulation>,
    background: f64,
    center: f64,
}

impl Scene {
    /// `center` is the view coordinate at which each point sits at `u0`.
    pub fn new(points: Vec<ScenePoint>, background: f64, center: f64) -> Result<Self> {
        for p in &points {
            p.validate()?;
        }
        if !(0.0..=1.0).contains(&background) || !center.is_finite() {
            return Err(LfError::Invalid(format!(
                "background {background}, centre {center}"
            )));
        }
        let mods = points
            .iter()
            .map(|p| {
                if p.mod_depth > 0.0 {
                    Modulation::random(p.beta_over_z, p.mod_seed)
                } else {
                    Modulation::none()
                }
            })
            .collect();
        Ok(Self {
            points,
            mods,
            background,
            center,
        })
    }

    pub fn points(&self) -> &[ScenePoint] {
        &self.points
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Position of point `i` in view `s`.
    pub fn position(&self, i: usize, s: f64) -> f64 {
        let p = &self.points[i];
        p.u0 - p.d * (s - self.center)
    }
}

impl EpiSource for Scene {
    fn sample_row(&self, s: f64, cols: usize, out: &mut [f64]) {
        out[..cols].fill(self.background);
        for (i, (p, m)) in self.points.iter().zip(&self.mods).enumerate() {
            let value = p.intensity * (1.0 + p.mod_depth * m.eval(s));
            composite(&mut out[..cols], self.position(i, s), p.width, value);
        }
        for o in &mut out[..cols] {
            *o = o.clamp(0.0, 1.0);
        }
    }
}

/// Samples `src` at the given view coordinates.
pub fn render_views(src: &dyn EpiSource, views: &[f64], cols: usize) -> Grid2<f64> {
    let mut g = Grid2::zeros(views.len(), cols);
    for (r, &s) in views.iter().enumerate() {
        src.sample_row(s, cols, g.row_mut(r));
    }
    g
}

fn check_extent(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 8 {
        return Err(LfError::Dimension(format!(
            "rendering needs S >= 2 and U >= 8, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Renders `S` views centred on view `S/2` over a black background.
pub fn render_epi(points: &[ScenePoint], views: usize, cols: usize) -> Result<Epi> {
    check_extent(views, cols)?;
    let scene = Scene::new(points.to_vec(), 0.0, views as f64 / 2.0)?;
    render_scene_epi(&scene, views, cols)
}

/// Renders integer views `0..views` of a prepared scene.
pub fn render_scene_epi(scene: &Scene, views: usize, cols: usize) -> Result<Epi> {
    let coords: Vec<f64> = (0..views).map(|s| s as f64).collect();
    Ok(Epi::synthetic(render_views(scene, &coords, cols)))
}

/// Coarse view count for a dense count `s_hr`.
pub fn coarse_views(s_hr: usize, alpha_s: usize) -> Result<usize> {
    if alpha_s == 0 || s_hr == 0 || !(s_hr + alpha_s - 1).is_multiple_of(alpha_s) {
        return Err(LfError::Invalid(format!(
            "{s_hr} dense views is not alpha_s*S - (alpha_s - 1) for alpha_s = {alpha_s}"
        )));
    }
    Ok(s_hr.div_ceil(alpha_s))
}

/// Dense ground truth and its sparse subsampling from the same sampler.
///
/// Point disparities are per sparse view step: dense row `r` is view
/// `r / alpha_s`, and every `alpha_s`-th dense row is a sparse row. The
/// sparse rows are exactly [`render_epi`] at `S_lr` views.
pub fn render_dense_oracle(points: &[ScenePoint], s_hr: usize, cols: usize, alpha_s: usize) -> Result<(Epi, Epi)> {
    let s_lr = coarse_views(s_hr, alpha_s)?;
    let scene = Scene::new(points.to_vec(), 0.0, s_lr as f64 / 2.0)?;
    dense_pair(&scene, s_hr, cols, alpha_s)
}

/// [`render_dense_oracle`] for any source whose view coordinates are in
/// sparse view steps.
pub fn dense_pair(src: &dyn EpiSource, s_hr: usize, cols: usize, alpha_s: usize) -> Result<(Epi, Epi)> {
    coarse_views(s_hr, alpha_s)?;
    check_extent(s_hr, cols)?;
    let coords: Vec<f64> = (0..s_hr).map(|r| r as f64 / alpha_s as f64).collect();
    let hr = render_views(src, &coords, cols);
    let lr = downsample_angular_nearest(&hr, alpha_s, 0)?;
    Ok((Epi::synthetic(lr), Epi::synthetic(hr)))
}

/// Random texture of points with one shared disparity, spread so that every
/// view of `views` stays covered.
pub fn textured_points(rng: &mut impl Rng, cols: usize, views: usize, d: f64, gap: (f64, f64), width: f64) -> Vec<ScenePoint> {
    let margin = d.abs() * views as f64 / 2.0 + 4.0 * width + 2.0;
    let mut pts = Vec::new();
    let mut u = -margin + rng.random_range(0.0..gap.1);
    while u < cols as f64 + margin {
        let mut p = ScenePoint::lambertian(u, d, rng.random_range(0.2..0.8));
        p.width = width;
        pts.push(p);
        u += rng.random_range(gap.0..=gap.1);
    }
    pts
}

/// The spectral analysis scene: three near-zero-disparity points (one of
/// them non-Lambertian) and a fourth point with a larger disparity. Values
/// are illustrative.
pub fn fig2_preset() -> Vec<ScenePoint> {
    vec![
        ScenePoint::lambertian(30.0, 0.3, 0.6),
        ScenePoint::lambertian(58.0, -0.4, 0.5).with_modulation(0.6, 0.5, 7),
        ScenePoint::lambertian(84.0, 0.7, 0.6),
        ScenePoint::lambertian(104.0, 2.5, 0.7),
    ]
}

/// Catmull-Rom interpolation through uniformly spaced knots on `[0, span]`.
fn catmull_rom(knots: &[f64], span: f64, s: f64) -> f64 {
    match knots.len() {
        0 => 0.0,
        1 => knots[0],
        n => {
            let x = (s / span.max(f64::MIN_POSITIVE) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let i = (x.floor() as usize).min(n - 2);
            let t = x - i as f64;
            let k = |j: isize| knots[j.clamp(0, n as isize - 1) as usize];
            let i = i as isize;
            let (p0, p1, p2, p3) = (k(i - 1), k(i), k(i + 1), k(i + 2));
            // Keys kernel at a = -0.5 is the Catmull-Rom spline.
            p0 * keys_kernel(t + 1.0) + p1 * keys_kernel(t) + p2 * keys_kernel(1.0 - t) + p3 * keys_kernel(2.0 - t)
        }
    }
}

/// One curved trajectory in a pseudo-EPI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrack {
    pub u0: f64,
    pub intensity: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Disparity knots spread evenly over the view span.
    pub disparity_knots: Vec<f64>,
}

/// A pseudo-EPI: curved trajectories with band-limited intensity flicker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoEpiSpec {
    pub tracks: Vec<PseudoTrack>,
    /// Highest flicker frequency (rad per view).
    pub flicker_beta: f64,
    pub flicker_depth: f64,
    #[serde(default)]
    pub background: f64,
    pub seed: u64,
}

/// Continuous sampler for a [`PseudoEpiSpec`]. Knots span views `[0, S - 1]`
/// and tracks sit at `u0` on view `S/2`, as in [`render_epi`].
#[derive(Clone, Debug)]
pub struct PseudoScene {
    spec: PseudoEpiSpec,
    span: f64,
    center: f64,
    flicker: Vec<Modulation>,
}

const PATH_STEPS_PER_VIEW: usize = 32;

impl PseudoScene {
    pub fn new(spec: PseudoEpiSpec, views: usize) -> Result<Self> {
        let span = views.saturating_sub(1) as f64;
        let ok = spec.flicker_beta >= 0.0
            && (0.0..1.0).contains(&spec.flicker_depth)
            && (0.0..=1.0).contains(&spec.background)
            && span > 0.0
            && spec.tracks.iter().all(|t| {
                t.width > 0.0
                    && t.intensity > 0.0
                    && t.intensity * (1.0 + spec.flicker_depth) <= 1.0 + 1e-12
                    && !t.disparity_knots.is_empty()
                    && t.disparity_knots.iter().all(|d| d.is_finite())
            });
        if !ok {
            return Err(LfError::Invalid("pseudo-EPI spec".into()));
        }
        let flicker = (0..spec.tracks.len())
            .map(|i| Modulation::random(spec.flicker_beta, spec.seed.wrapping_add(i as u64 * 0x9e37_79b9)))
            .collect();
        Ok(Self {
            span,
            center: views as f64 / 2.0,
            spec,
            flicker,
        })
    }

    pub fn disparity(&self, track: usize, s: f64) -> f64 {
        catmull_rom(&self.spec.tracks[track].disparity_knots, self.span, s)
    }

    /// `u0 - ∫_c^s d(σ) dσ`, by Simpson's rule.
    pub fn position(&self, track: usize, s: f64) -> f64 {
        let (a, b) = (self.center, s);
        let n = 2 * ((((b - a).abs() * PATH_STEPS_PER_VIEW as f64).ceil() as usize).max(1));
        let h = (b - a) / n as f64;
        let mut acc = self.disparity(track, a) + self.disparity(track, b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.disparity(track, a + i as f64 * h);
        }
        self.spec.tracks[track].u0 - acc * h / 3.0
    }
}

impl EpiSource for PseudoScene {
    fn sample_row(&self, s: f64, cols: usize, out: &mut [f64]) {
        out[..cols].fill(self.spec.background);
        for (i, t) in self.spec.tracks.iter().enumerate() {
            let value = t.intensity * (1.0 + self.spec.flicker_depth * self.flicker[i].eval(s));
            composite(&mut out[..cols], self.position(i, s), t.width, value);
        }
        for o in &mut out[..cols] {
            *o = o.clamp(0.0, 1.0);
        }
    }
}

/// Renders `S` integer views of a pseudo-EPI.
pub fn render_pseudo_epi(spec: &PseudoEpiSpec, views: usize, cols: usize) -> Result<Epi> {
    check_extent(views, cols)?;
    let scene = PseudoScene::new(spec.clone(), views)?;
    let coords: Vec<f64> = (0..views).map(|s| s as f64).collect();
    Ok(Epi::new(render_views(&scene, &coords, cols), Provenance::Pseudo))
}

/// Blob of a 4D scene, a Gaussian spot moving by `d` per view along both
/// angular axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub u0: f64,
    pub v0: f64,
    pub d: f64,
    pub intensity: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

/// Renders a light field at the given (possibly fractional) view coordinates,
/// with view centres `(cs, ct)`.
pub fn render_light_field(
    blobs: &[Blob],
    background: f64,
    (width, height): (usize, usize),
    s_coords: &[f64],
    t_coords: &[f64],
    (cs, ct): (f64, f64),
) -> Result<LightField4D> {
    for b in blobs {
        if !(b.width > 0.0 && b.intensity > 0.0 && b.intensity <= 1.0 && b.d.is_finite()) {
            return Err(LfError::Invalid(format!("blob {b:?}")));
        }
    }
    let mut lf = LightField4D::zeros(width, height, s_coords.len(), t_coords.len())?;
    let views: Vec<(usize, usize)> = (0..t_coords.len())
        .flat_map(|t| (0..s_coords.len()).map(move |s| (s, t)))
        .collect();
    let images: Vec<Grid2<f64>> = views
        .par_iter()
        .map(|&(s, t)| {
            let mut img = Grid2::filled(height, width, background);
            for b in blobs {
                let pu = b.u0 - b.d * (s_coords[s] - cs);
                let pv = b.v0 - b.d * (t_coords[t] - ct);
                let reach = 6.0 * b.width;
                let inv = 1.0 / (2.0 * b.width * b.width);
                let v_lo = (pv - reach).floor().max(0.0) as usize;
                let v_hi = (pv + reach).ceil().min(height as f64 - 1.0);
                let u_lo = (pu - reach).floor().max(0.0) as usize;
                let u_hi = (pu + reach).ceil().min(width as f64 - 1.0);
                if v_hi < 0.0 || u_hi < 0.0 {
                    continue;
                }
                for v in v_lo..=v_hi as usize {
                    for u in u_lo..=u_hi as usize {
                        let (x, y) = (u as f64 - pu, v as f64 - pv);
                        let w = (-(x * x + y * y) * inv).exp();
                        let old = img.get(v, u);
                        img.set(v, u, old * (1.0 - w) + b.intensity * w);
                    }
                }
            }
            img
        })
        .collect();
    for (&(s, t), img) in views.iter().zip(&images) {
        lf.set_view(s, t, img)?;
    }
    Ok(lf)
}

/// Sparse and dense light fields of a blob scene. Disparities are per sparse
/// view step; the dense field has `alpha_s·n - (alpha_s - 1)` views per axis.
pub fn render_light_field_oracle(
    blobs: &[Blob],
    background: f64,
    size: (usize, usize),
    views: (usize, usize),
    alpha_s: usize,
) -> Result<(LightField4D, LightField4D)> {
    let (ns, nt) = views;
    if ns == 0 || nt == 0 || alpha_s == 0 {
        return Err(LfError::Invalid("view counts and alpha_s must be >= 1".into()));
    }
    let center = (ns as f64 / 2.0, nt as f64 / 2.0);
    let coarse = |n: usize| -> Vec<f64> { (0..n).map(|i| i as f64).collect() };
    let fine = |n: usize| -> Vec<f64> {
        (0..upsampled_views(n, alpha_s))
            .map(|i| i as f64 / alpha_s as f64)
            .collect()
    };
    let sparse = render_light_field(blobs, background, size, &coarse(ns), &coarse(nt), center)?;
    let dense = render_light_field(blobs, background, size, &fine(ns), &fine(nt), center)?;
    Ok((sparse, dense))
}

/// Random blob scene with disparities in `[d_min, d_max]`.
pub fn random_blobs(rng: &mut impl Rng, size: (usize, usize), count: usize, d_range: (f64, f64)) -> Vec<Blob> {
    (0..count)
        .map(|_| Blob {
            u0: rng.random_range(0.0..size.0 as f64),
            v0: rng.random_range(0.0..size.1 as f64),
            d: rng.random_range(d_range.0..=d_range.1),
            intensity: rng.random_range(0.3..0.9),
            width: rng.random_range(1.2..2.5),
        })
        .collect()
}

/// Curriculum phase of a training patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Regular,
    Pseudo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSetConfig {
    pub regular_count: usize,
    pub pseudo_count: usize,
    /// Sparse views per input patch.
    pub views: usize,
    pub cols: usize,
    pub alpha_s: usize,
    /// Disparity range in pixels per sparse view step.
    pub d_min: f64,
    pub d_max: f64,
    pub non_lambertian_fraction: f64,
    pub beta_max: f64,
    pub mod_depth: f64,
    pub gap: (f64, f64),
    pub background: (f64, f64),
    pub seed: u64,
}

impl Default for TrainingSetConfig {
    fn default() -> Self {
        Self {
            regular_count: 512,
            pseudo_count: 0,
            views: 6,
            cols: 72,
            alpha_s: 3,
            d_min: -2.0,
            d_max: 2.0,
            non_lambertian_fraction: 0.0,
            beta_max: 0.5,
            mod_depth: 0.3,
            gap: (4.0, 10.0),
            background: (0.0, 0.0),
            seed: 0,
        }
    }
}

/// Input and label patch with the disparity it was rendered at.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub input: Epi,
    pub label: Epi,
    pub disparity: f64,
    pub phase: Phase,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSet {
    pub regular: Vec<PatchPair>,
    pub pseudo: Vec<PatchPair>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.regular.len() + self.pseudo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every sample value, patch by patch, as little-endian bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in self.regular.iter().chain(&self.pseudo) {
            out.extend_from_slice(&p.disparity.to_le_bytes());
            for v in p.input.samples.as_slice().iter().chain(p.label.samples.as_slice()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn patch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stratified disparity for patch `i` of `n`: one draw per equal-width bin.
fn stratified(rng: &mut ChaCha8Rng, i: usize, n: usize, lo: f64, hi: f64) -> f64 {
    let x: f64 = rng.random_range(0.0..1.0);
    lo + (hi - lo) * (i as f64 + x) / n as f64
}

fn regular_patch(cfg: &TrainingSetConfig, i: usize, order: usize) -> Result<PatchPair> {
    let mut rng = patch_rng(cfg.seed, 2 * i as u64);
    let d = stratified(&mut rng, order, cfg.regular_count, cfg.d_min, cfg.d_max);
    let s_hr = upsampled_views(cfg.views, cfg.alpha_s);
    let mut pts = textured_points(&mut rng, cfg.cols, cfg.views, d, cfg.gap, DEFAULT_WIDTH);
    if rng.random_bool(cfg.non_lambertian_fraction.clamp(0.0, 1.0)) {
        for p in &mut pts {
            let beta = rng.random_range(0.0..=cfg.beta_max);
            p.intensity = p.intensity.min(1.0 / (1.0 + cfg.mod_depth));
            *p = p.with_modulation(beta, cfg.mod_depth, rng.random());
        }
    }
    let bg = if cfg.background.1 > cfg.background.0 {
        rng.random_range(cfg.background.0..cfg.background.1)
    } else {
        cfg.background.0
    };
    let scene = Scene::new(pts, bg, cfg.views as f64 / 2.0)?;
    let (input, label) = dense_pair(&scene, s_hr, cfg.cols, cfg.alpha_s)?;
    Ok(PatchPair {
        input,
        label,
        disparity: d,
        phase: Phase::Regular,
    })
}

fn pseudo_patch(cfg: &TrainingSetConfig, i: usize, order: usize) -> Result<PatchPair> {
    let mut rng = patch_rng(cfg.seed, 2 * i as u64 + 1);
    let d = stratified(&mut rng, order, cfg.pseudo_count, cfg.d_min, cfg.d_max);
    let s_hr = upsampled_views(cfg.views, cfg.alpha_s);
    let wobble = 0.25 * (cfg.d_max - cfg.d_min).abs().max(0.4);
    let depth = cfg.mod_depth;
    let tracks = textured_points(&mut rng, cfg.cols, cfg.views, d, cfg.gap, DEFAULT_WIDTH)
        .into_iter()
        .map(|p| PseudoTrack {
            u0: p.u0,
            intensity: p.intensity.min(1.0 / (1.0 + depth)),
            width: p.width,
            disparity_knots: (0..4).map(|_| d + rng.random_range(-wobble..=wobble)).collect(),
        })
        .collect();
    let spec = PseudoEpiSpec {
        tracks,
        flicker_beta: rng.random_range(0.0..=cfg.beta_max),
        flicker_depth: depth,
        background: cfg.background.0,
        seed: rng.random(),
    };
    let scene = PseudoScene::new(spec, cfg.views)?;
    let (lr, hr) = dense_pair(&scene, s_hr, cfg.cols, cfg.alpha_s)?;
    Ok(PatchPair {
        input: Epi::new(lr.samples, Provenance::Pseudo),
        label: Epi::new(hr.samples, Provenance::Pseudo),
        disparity: d,
        phase: Phase::Pseudo,
    })
}

/// Deterministic training pairs: regular synthetic EPIs and pseudo-EPIs.
///
/// Disparities are stratified over `[d_min, d_max]` and the patch order is
/// shuffled with the seed. Patches are rendered in parallel from per-patch
/// streams, so the result does not depend on scheduling.
pub fn make_training_set(cfg: &TrainingSetConfig) -> Result<TrainingSet> {
    if cfg.views < 2 || cfg.alpha_s < 1 || cfg.cols < 8 || !(cfg.d_min <= cfg.d_max) {
        return Err(LfError::Invalid(format!("training set config {cfg:?}")));
    }
    let order = |n: usize, stream: u64| -> Vec<usize> {
        let mut rng = patch_rng(cfg.seed, stream);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        idx
    };
    let reg_order = order(cfg.regular_count, u64::MAX);
    let pse_order = order(cfg.pseudo_count, u64::MAX - 1);
    let regular = (0..cfg.regular_count)
        .into_par_iter()
        .map(|i| regular_patch(cfg, i, reg_order[i]))
        .collect::<Result<Vec<_>>>()?;
    let pseudo = (0..cfg.pseudo_count)
        .into_par_iter()
        .map(|i| pseudo_patch(cfg, i, pse_order[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { regular, pseudo })
}
