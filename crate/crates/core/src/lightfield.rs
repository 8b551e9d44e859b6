//! The 4D light field container, EPI slicing and the two-step 4D reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::pyramid::ResampleWeights;
use crate::scalar::Scalar;

/// Disparity interval in pixels per view step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityRange {
    d_min: f64,
    d_max: f64,
}

impl DisparityRange {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        if !(d_min.is_finite() && d_max.is_finite()) || d_min > d_max {
            return Err(LfError::Invalid(format!(
                "disparity range [{d_min}, {d_max}]"
            )));
        }
        Ok(Self { d_min, d_max })
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Optimal rendering disparity, the midpoint of the range.
    pub fn d_opt(&self) -> f64 {
        0.5 * (self.d_min + self.d_max)
    }

    pub fn width(&self) -> f64 {
        self.d_max - self.d_min
    }
}

/// Where an EPI came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// `E(u, s)` at fixed image row `v` and camera row `t`.
    Horizontal { v: usize, t: usize },
    /// `E(v, t)` at fixed image column `u` and camera column `s`.
    Vertical { u: usize, s: usize },
    Synthetic,
    Pseudo,
}

/// Epipolar plane image: rows are views, columns are pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Epi<T = f64> {
    pub samples: Grid2<T>,
    pub provenance: Provenance,
}

impl<T: Scalar> Epi<T> {
    pub fn new(samples: Grid2<T>, provenance: Provenance) -> Self {
        Self {
            samples,
            provenance,
        }
    }

    pub fn synthetic(samples: Grid2<T>) -> Self {
        Self::new(samples, Provenance::Synthetic)
    }

    /// Number of views (rows).
    pub fn angular(&self) -> usize {
        self.samples.rows()
    }

    /// Number of pixels per view (columns).
    pub fn spatial(&self) -> usize {
        self.samples.cols()
    }

    pub fn with_samples(&self, samples: Grid2<T>) -> Self {
        Self::new(samples, self.provenance)
    }
}

/// Luminance light field `L(u, v, s, t)`.
///
/// Samples are stored with `t` outermost and `u` innermost, so one horizontal
/// EPI row (fixed `v`, `s`, `t`) is a contiguous run of `width` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField4D<T = f64> {
    width: usize,
    height: usize,
    views_s: usize,
    views_t: usize,
    samples: Vec<T>,
    pub disparity_hint: Option<DisparityRange>,
}

impl<T: Scalar> LightField4D<T> {
    pub fn zeros(width: usize, height: usize, views_s: usize, views_t: usize) -> Result<Self> {
        Self::check_dims(width, height, views_s, views_t)?;
        Ok(Self {
            width,
            height,
            views_s,
            views_t,
            samples: vec![T::zero(); width * height * views_s * views_t],
            disparity_hint: None,
        })
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        views_s: usize,
        views_t: usize,
        samples: Vec<T>,
    ) -> Result<Self> {
        Self::check_dims(width, height, views_s, views_t)?;
        if samples.len() != width * height * views_s * views_t {
            return Err(LfError::Dimension(format!(
                "{} samples for {width}x{height}x{views_s}x{views_t}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(LfError::NonFinite(format!("flat index {i}")));
        }
        Ok(Self {
            width,
            height,
            views_s,
            views_t,
            samples,
            disparity_hint: None,
        })
    }

    /// Builds a light field from a sampling function `f(u, v, s, t)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        views_s: usize,
        views_t: usize,
        f: impl Fn(usize, usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut lf = Self::zeros(width, height, views_s, views_t)?;
        for t in 0..views_t {
            for s in 0..views_s {
                for v in 0..height {
                    for u in 0..width {
                        let i = lf.index(u, v, s, t);
                        lf.samples[i] = f(u, v, s, t);
                    }
                }
            }
        }
        Ok(lf)
    }

    fn check_dims(width: usize, height: usize, views_s: usize, views_t: usize) -> Result<()> {
        if width == 0 || height == 0 || views_s == 0 || views_t == 0 {
            return Err(LfError::Dimension(format!(
                "all dimensions must be >= 1, got {width}x{height}x{views_s}x{views_t}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn views_s(&self) -> usize {
        self.views_s
    }

    pub fn views_t(&self) -> usize {
        self.views_t
    }

    pub fn as_slice(&self) -> &[T] {
        &self.samples
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize, s: usize, t: usize) -> usize {
        ((t * self.views_s + s) * self.height + v) * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, s: usize, t: usize) -> T {
        self.samples[self.index(u, v, s, t)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, s: usize, t: usize, value: T) {
        let i = self.index(u, v, s, t);
        self.samples[i] = value;
    }

    /// The sub-aperture image at view `(s, t)`, rows indexed by `v`.
    pub fn view(&self, s: usize, t: usize) -> Grid2<T> {
        let n = self.width * self.height;
        let start = (t * self.views_s + s) * n;
        Grid2::from_vec(self.height, self.width, self.samples[start..start + n].to_vec())
            .expect("view size is consistent")
    }

    pub fn set_view(&mut self, s: usize, t: usize, image: &Grid2<T>) -> Result<()> {
        if image.shape() != (self.height, self.width) {
            return Err(LfError::Dimension(format!(
                "view {:?} into {}x{} light field",
                image.shape(),
                self.height,
                self.width
            )));
        }
        let n = self.width * self.height;
        let start = (t * self.views_s + s) * n;
        self.samples[start..start + n].copy_from_slice(image.as_slice());
        Ok(())
    }

    /// `E_{v*, t*}(u, s)`.
    pub fn extract_epi_horizontal(&self, v_star: usize, t_star: usize) -> Result<Epi<T>> {
        bound("v_star", v_star, self.height)?;
        bound("t_star", t_star, self.views_t)?;
        let mut g = Grid2::zeros(self.views_s, self.width);
        for s in 0..self.views_s {
            let start = self.index(0, v_star, s, t_star);
            g.row_mut(s)
                .copy_from_slice(&self.samples[start..start + self.width]);
        }
        Ok(Epi::new(
            g,
            Provenance::Horizontal {
                v: v_star,
                t: t_star,
            },
        ))
    }

    /// `E_{u*, s*}(v, t)`.
    pub fn extract_epi_vertical(&self, u_star: usize, s_star: usize) -> Result<Epi<T>> {
        bound("u_star", u_star, self.width)?;
        bound("s_star", s_star, self.views_s)?;
        let g = Grid2::from_fn(self.views_t, self.height, |t, v| {
            self.get(u_star, v, s_star, t)
        });
        Ok(Epi::new(
            g,
            Provenance::Vertical {
                u: u_star,
                s: s_star,
            },
        ))
    }

    /// Writes an EPI back into the slice named by its provenance.
    pub fn insert_epi(&mut self, epi: &Epi<T>) -> Result<()> {
        match epi.provenance {
            Provenance::Horizontal { v, t } => self.write_horizontal(v, t, &epi.samples),
            Provenance::Vertical { u, s } => self.write_vertical(u, s, &epi.samples),
            other => Err(LfError::Invalid(format!(
                "EPI with provenance {other:?} has no slice address"
            ))),
        }
    }

    fn write_horizontal(&mut self, v: usize, t: usize, g: &Grid2<T>) -> Result<()> {
        bound("v", v, self.height)?;
        bound("t", t, self.views_t)?;
        if g.shape() != (self.views_s, self.width) {
            return Err(LfError::Dimension(format!(
                "horizontal EPI {:?}, expected ({}, {})",
                g.shape(),
                self.views_s,
                self.width
            )));
        }
        for s in 0..self.views_s {
            let start = self.index(0, v, s, t);
            self.samples[start..start + self.width].copy_from_slice(g.row(s));
        }
        Ok(())
    }

    fn write_vertical(&mut self, u: usize, s: usize, g: &Grid2<T>) -> Result<()> {
        bound("u", u, self.width)?;
        bound("s", s, self.views_s)?;
        if g.shape() != (self.views_t, self.height) {
            return Err(LfError::Dimension(format!(
                "vertical EPI {:?}, expected ({}, {})",
                g.shape(),
                self.views_t,
                self.height
            )));
        }
        for t in 0..self.views_t {
            for v in 0..self.height {
                self.set(u, v, s, t, g.get(t, v));
            }
        }
        Ok(())
    }

    /// Resamples the angular axes to `views_s x views_t` with the anti-aliased
    /// cubic resampler. The first and last views stay fixed.
    pub fn resample_views(&self, views_s: usize, views_t: usize) -> Result<Self> {
        let ws = ResampleWeights::node_aligned(self.views_s, views_s)?;
        let wt = ResampleWeights::node_aligned(self.views_t, views_t)?;
        let mut tmp = Self::zeros(self.width, self.height, views_s, self.views_t)?;
        let mut line = vec![T::zero(); self.views_s];
        let mut out = vec![T::zero(); views_s];
        for t in 0..self.views_t {
            for v in 0..self.height {
                for u in 0..self.width {
                    for (s, x) in line.iter_mut().enumerate() {
                        *x = self.get(u, v, s, t);
                    }
                    ws.apply(&line, &mut out);
                    for (s, &x) in out.iter().enumerate() {
                        tmp.set(u, v, s, t, x);
                    }
                }
            }
        }
        let mut res = Self::zeros(self.width, self.height, views_s, views_t)?;
        let mut line = vec![T::zero(); self.views_t];
        let mut out = vec![T::zero(); views_t];
        for s in 0..views_s {
            for v in 0..self.height {
                for u in 0..self.width {
                    for (t, x) in line.iter_mut().enumerate() {
                        *x = tmp.get(u, v, s, t);
                    }
                    wt.apply(&line, &mut out);
                    for (t, &x) in out.iter().enumerate() {
                        res.set(u, v, s, t, x);
                    }
                }
            }
        }
        res.disparity_hint = self.disparity_hint;
        Ok(res)
    }
}

fn bound(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index >= limit {
        Err(LfError::OutOfRange { what, index, limit })
    } else {
        Ok(())
    }
}

/// View count after angular upsampling by `alpha_s`: `alpha_s * n - (alpha_s - 1)`.
pub fn upsampled_views(n: usize, alpha_s: usize) -> usize {
    if n == 0 {
        0
    } else {
        alpha_s * n - (alpha_s - 1)
    }
}

/// Two-step 4D reconstruction.
///
/// Every horizontal EPI `E_{v,t}(u, s)` is upsampled along `s` first; the
/// vertical EPIs `E_{u,s}(v, t)` of that intermediate field are then
/// upsampled along `t`. Axes holding a single view are passed through. Input
/// views are copied to `(s * alpha_s, t * alpha_s)` unmodified.
pub fn reconstruct_4d<T, F>(sparse: &LightField4D<T>, epi_fn: F, alpha_s: usize) -> Result<LightField4D<T>>
where
    T: Scalar,
    F: Fn(&Epi<T>) -> Result<Epi<T>> + Sync,
{
    if alpha_s == 0 {
        return Err(LfError::Invalid("alpha_s must be >= 1".into()));
    }
    if sparse.views_s < 2 && sparse.views_t < 2 {
        return Err(LfError::Invalid(
            "at least one angular axis needs two or more views".into(),
        ));
    }
    let out_s = if sparse.views_s >= 2 {
        upsampled_views(sparse.views_s, alpha_s)
    } else {
        1
    };
    let out_t = if sparse.views_t >= 2 {
        upsampled_views(sparse.views_t, alpha_s)
    } else {
        1
    };

    let mut mid = LightField4D::zeros(sparse.width, sparse.height, out_s, sparse.views_t)?;
    if sparse.views_s >= 2 {
        let coords: Vec<(usize, usize)> = (0..sparse.views_t)
            .flat_map(|t| (0..sparse.height).map(move |v| (v, t)))
            .collect();
        let results: Vec<Result<Epi<T>>> = coords
            .par_iter()
            .map(|&(v, t)| {
                let epi = sparse.extract_epi_horizontal(v, t)?;
                let out = epi_fn(&epi).map_err(|e| slice_err("horizontal v,t", v, t, e))?;
                check_output(&out, out_s, sparse.width)
                    .map_err(|e| slice_err("horizontal v,t", v, t, e))?;
                Ok(out)
            })
            .collect();
        for (&(v, t), r) in coords.iter().zip(results) {
            mid.write_horizontal(v, t, &r?.samples)?;
        }
    } else {
        mid.samples.clone_from(&sparse.samples);
    }

    let mut full = LightField4D::zeros(sparse.width, sparse.height, out_s, out_t)?;
    if sparse.views_t >= 2 {
        let coords: Vec<(usize, usize)> = (0..out_s)
            .flat_map(|s| (0..sparse.width).map(move |u| (u, s)))
            .collect();
        let results: Vec<Result<Epi<T>>> = coords
            .par_iter()
            .map(|&(u, s)| {
                let epi = mid.extract_epi_vertical(u, s)?;
                let out = epi_fn(&epi).map_err(|e| slice_err("vertical u,s", u, s, e))?;
                check_output(&out, out_t, sparse.height)
                    .map_err(|e| slice_err("vertical u,s", u, s, e))?;
                Ok(out)
            })
            .collect();
        for (&(u, s), r) in coords.iter().zip(results) {
            full.write_vertical(u, s, &r?.samples)?;
        }
    } else {
        full.samples = mid.samples;
    }

    let step_s = if sparse.views_s >= 2 { alpha_s } else { 1 };
    let step_t = if sparse.views_t >= 2 { alpha_s } else { 1 };
    for t in 0..sparse.views_t {
        for s in 0..sparse.views_s {
            full.set_view(s * step_s, t * step_t, &sparse.view(s, t))?;
        }
    }
    full.disparity_hint = sparse.disparity_hint;
    Ok(full)
}

fn check_output<T: Scalar>(out: &Epi<T>, rows: usize, cols: usize) -> Result<()> {
    if out.samples.shape() != (rows, cols) {
        return Err(LfError::Dimension(format!(
            "reconstructor returned {:?}, expected ({rows}, {cols})",
            out.samples.shape()
        )));
    }
    Ok(())
}

fn slice_err(axis: &'static str, a: usize, b: usize, e: LfError) -> LfError {
    LfError::Slice {
        axis,
        a,
        b,
        source: Box::new(e),
    }
}
