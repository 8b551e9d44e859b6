//! Cubic-convolution resampling and the Laplacian residual pyramid.
//!
//! Resampling uses the Keys kernel with `a = -0.5`. When shrinking, the
//! kernel is stretched by the scale factor so it also acts as the
//! anti-aliasing prefilter. Borders replicate the edge sample.

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::scalar::Scalar;

pub const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel.
#[inline]
pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let t = x.abs();
    if t < 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// How taps beyond either end of a line are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Repeat the edge sample.
    Replicate,
    /// Cubic extrapolation `f(-1) = 3f(0) - 3f(1) + f(2)`, which keeps the
    /// interpolation third-order accurate up to the ends. Lines shorter than
    /// three samples fall back to replication.
    Extrapolate,
}

/// Precomputed taps mapping a line of `src_len` samples to `dst_len` samples.
#[derive(Clone, Debug)]
pub struct ResampleWeights {
    src_len: usize,
    taps: Vec<(Vec<usize>, Vec<f64>)>,
}

impl ResampleWeights {
    /// General constructor. `position(j)` is the source coordinate of output
    /// sample `j`; `scale` is the number of source samples per output sample.
    pub fn new(src_len: usize, dst_len: usize, scale: f64, position: impl Fn(usize) -> f64) -> Result<Self> {
        Self::with_boundary(src_len, dst_len, scale, Boundary::Replicate, position)
    }

    pub fn with_boundary(
        src_len: usize,
        dst_len: usize,
        scale: f64,
        boundary: Boundary,
        position: impl Fn(usize) -> f64,
    ) -> Result<Self> {
        if src_len == 0 {
            return Err(LfError::Dimension("cannot resample an empty line".into()));
        }
        let stretch = scale.max(1.0);
        let reach = 2.0 * stretch;
        let last = (src_len - 1) as isize;
        let taps = (0..dst_len)
            .map(|j| {
                let p = position(j);
                let lo = (p - reach).floor() as isize;
                let hi = (p + reach).ceil() as isize;
                let mut idx = Vec::new();
                let mut w = Vec::new();
                for i in lo..=hi {
                    let k = keys_kernel((i as f64 - p) / stretch);
                    if k == 0.0 {
                        continue;
                    }
                    let extrapolate = boundary == Boundary::Extrapolate && src_len >= 3;
                    if extrapolate && (i == -1 || i == last + 1) {
                        let (a, b, c) = if i < 0 { (0, 1, 2) } else { (last, last - 1, last - 2) };
                        for (j, m) in [(a, 3.0), (b, -3.0), (c, 1.0)] {
                            idx.push(j as usize);
                            w.push(m * k);
                        }
                    } else {
                        idx.push(i.clamp(0, last) as usize);
                        w.push(k);
                    }
                }
                let sum: f64 = w.iter().sum();
                for x in &mut w {
                    *x /= sum;
                }
                (idx, w)
            })
            .collect();
        Ok(Self { src_len, taps })
    }

    /// Pixel-centre aligned mapping for a spatial scale change by `scale`
    /// source pixels per output pixel.
    pub fn centered(src_len: usize, dst_len: usize, scale: f64) -> Result<Self> {
        Self::new(src_len, dst_len, scale, |j| (j as f64 + 0.5) * scale - 0.5)
    }

    /// Node aligned mapping: first and last samples coincide.
    pub fn node_aligned(src_len: usize, dst_len: usize) -> Result<Self> {
        if dst_len == 0 {
            return Err(LfError::Dimension("empty output".into()));
        }
        let scale = if dst_len > 1 && src_len > 1 {
            (src_len - 1) as f64 / (dst_len - 1) as f64
        } else {
            1.0
        };
        Self::new(src_len, dst_len, scale, |j| j as f64 * scale)
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn dst_len(&self) -> usize {
        self.taps.len()
    }

    pub fn apply<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        debug_assert_eq!(src.len(), self.src_len);
        for (out, (idx, w)) in dst.iter_mut().zip(&self.taps) {
            let mut acc = 0.0;
            for (&i, &wi) in idx.iter().zip(w) {
                acc += wi * src[i].to_f64_lossy();
            }
            *out = T::of(acc);
        }
    }

    /// Resamples every row of `x`.
    pub fn apply_rows<T: Scalar>(&self, x: &Grid2<T>) -> Grid2<T> {
        let mut out = Grid2::zeros(x.rows(), self.dst_len());
        for r in 0..x.rows() {
            self.apply(x.row(r), out.row_mut(r));
        }
        out
    }

    /// Resamples every column of `x`.
    pub fn apply_cols<T: Scalar>(&self, x: &Grid2<T>) -> Grid2<T> {
        let mut out = Grid2::zeros(self.dst_len(), x.cols());
        let mut line = vec![T::zero(); x.rows()];
        let mut res = vec![T::zero(); self.dst_len()];
        for c in 0..x.cols() {
            for (r, v) in line.iter_mut().enumerate() {
                *v = x.get(r, c);
            }
            self.apply(&line, &mut res);
            for (r, &v) in res.iter().enumerate() {
                out.set(r, c, v);
            }
        }
        out
    }
}

/// Width after downscaling by `factor` (ceiling).
pub fn downscaled_len(len: usize, factor: usize) -> usize {
    len.div_ceil(factor)
}

/// Shrinks the spatial (column) axis by `factor` with the stretched cubic
/// kernel. The angular axis is untouched.
pub fn downscale_spatial<T: Scalar>(x: &Grid2<T>, factor: usize) -> Result<Grid2<T>> {
    if factor == 0 {
        return Err(LfError::Invalid("downscale factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let w = ResampleWeights::centered(x.cols(), downscaled_len(x.cols(), factor), factor as f64)?;
    Ok(w.apply_rows(x))
}

/// Enlarges the spatial axis by `factor` with cubic interpolation.
pub fn upscale_spatial<T: Scalar>(x: &Grid2<T>, factor: usize) -> Result<Grid2<T>> {
    upscale_spatial_to(x, factor, x.cols() * factor)
}

/// Enlarges the spatial axis by `factor`, producing exactly `width` columns.
pub fn upscale_spatial_to<T: Scalar>(x: &Grid2<T>, factor: usize, width: usize) -> Result<Grid2<T>> {
    if factor == 0 {
        return Err(LfError::Invalid("upscale factor must be >= 1".into()));
    }
    if factor == 1 && width == x.cols() {
        return Ok(x.clone());
    }
    let w = ResampleWeights::centered(x.cols(), width, 1.0 / factor as f64)?;
    Ok(w.apply_rows(x))
}

/// Cubic interpolation along the angular (row) axis: `alpha_s * S - (alpha_s - 1)`
/// rows, input row `s` reproduced at `s * alpha_s`.
pub fn upsample_angular_cubic<T: Scalar>(x: &Grid2<T>, alpha_s: usize) -> Result<Grid2<T>> {
    if alpha_s == 0 {
        return Err(LfError::Invalid("alpha_s must be >= 1".into()));
    }
    let rows = crate::lightfield::upsampled_views(x.rows(), alpha_s);
    let a = alpha_s as f64;
    let w = ResampleWeights::with_boundary(x.rows(), rows, 1.0 / a, Boundary::Extrapolate, |r| r as f64 / a)?;
    Ok(w.apply_cols(x))
}

/// Keeps the rows `s` with `s % rate == offset`.
pub fn downsample_angular_nearest<T: Scalar>(x: &Grid2<T>, rate: usize, offset: usize) -> Result<Grid2<T>> {
    if rate == 0 || offset >= rate {
        return Err(LfError::Invalid(format!(
            "angular downsampling rate {rate}, offset {offset}"
        )));
    }
    let rows: Vec<usize> = (offset..x.rows()).step_by(rate).collect();
    Ok(x.select_rows(&rows))
}

/// Laplacian decomposition of the spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidLevels<T = f64> {
    /// Downscale factors, coarsest first, ending at 1.
    pub factors: Vec<usize>,
    /// The coarsest level.
    pub base: Grid2<T>,
    /// `residuals[k]` is the detail grid of level `k + 1`.
    pub residuals: Vec<Grid2<T>>,
}

impl<T: Scalar> PyramidLevels<T> {
    /// Column count of level `k` (0 = base).
    pub fn level_width(&self, k: usize) -> usize {
        if k == 0 {
            self.base.cols()
        } else {
            self.residuals[k - 1].cols()
        }
    }
}

fn check_factors(factors: &[usize]) -> Result<()> {
    if factors.is_empty() || *factors.last().unwrap() != 1 {
        return Err(LfError::Invalid("pyramid factors must end at 1".into()));
    }
    if factors.windows(2).any(|w| w[0] <= w[1]) {
        return Err(LfError::Invalid(
            "pyramid factors must be strictly decreasing".into(),
        ));
    }
    if factors.windows(2).any(|w| w[0] % w[1] != 0) {
        return Err(LfError::Invalid(
            "each pyramid factor must divide the previous one".into(),
        ));
    }
    Ok(())
}

/// Splits `x` into a coarse base and per-level residuals.
///
/// Level `k` is `downscale(x, factors[k])`; the residual of a level is the
/// level minus the upscaled previous level.
pub fn laplacian_decompose<T: Scalar>(x: &Grid2<T>, factors: &[usize]) -> Result<PyramidLevels<T>> {
    check_factors(factors)?;
    let levels = factors
        .iter()
        .map(|&f| downscale_spatial(x, f))
        .collect::<Result<Vec<_>>>()?;
    let mut residuals = Vec::with_capacity(levels.len() - 1);
    for k in 1..levels.len() {
        let ratio = factors[k - 1] / factors[k];
        let up = upscale_spatial_to(&levels[k - 1], ratio, levels[k].cols())?;
        residuals.push(levels[k].zip_map(&up, |a, b| a - b)?);
    }
    Ok(PyramidLevels {
        factors: factors.to_vec(),
        base: levels.into_iter().next().unwrap(),
        residuals,
    })
}

/// Inverse of [`laplacian_decompose`].
pub fn laplacian_reconstruct<T: Scalar>(p: &PyramidLevels<T>) -> Result<Grid2<T>> {
    check_factors(&p.factors)?;
    if p.residuals.len() + 1 != p.factors.len() {
        return Err(LfError::Dimension(format!(
            "{} residuals for {} factors",
            p.residuals.len(),
            p.factors.len()
        )));
    }
    let mut cur = p.base.clone();
    for (k, res) in p.residuals.iter().enumerate() {
        let ratio = p.factors[k] / p.factors[k + 1];
        let up = upscale_spatial_to(&cur, ratio, res.cols())?;
        if up.rows() != res.rows() {
            return Err(LfError::Dimension("residual row count".into()));
        }
        cur = up.zip_map(res, |a, b| a + b)?;
    }
    Ok(cur)
}
