//! Shearing of EPIs and feature stacks.
//!
//! Row `s` of a sheared grid samples the source at `u + (s - c) * alpha`,
//! where `c` is the shear centre (`S / 2` by default). Samples between pixels
//! are bilinear along `u`; samples outside `[0, U - 1]` are zero. With this
//! convention a line of disparity `d` (position `u0 - d * s`) becomes
//! vertical under `alpha = -d`.

use crate::error::{LfError, Result};
use crate::grid::{Grid2, Grid3};
use crate::lightfield::Epi;
use crate::scalar::Scalar;

/// Centre of the default shear: `S / 2`, not rounded.
#[inline]
pub fn default_center(rows: usize) -> f64 {
    rows as f64 / 2.0
}

/// Centre used when unshearing a tensor upsampled by `alpha_s` from a grid
/// sheared about `lr_center`.
#[inline]
pub fn upsampled_center(lr_center: f64, alpha_s: usize) -> f64 {
    lr_center * alpha_s as f64
}

/// Bilinear taps for output column `u` of a row shifted by `shift`.
#[inline]
fn taps(u: usize, shift: f64, cols: usize) -> Option<(usize, f64)> {
    let p = u as f64 + shift;
    if p < 0.0 || p > (cols - 1) as f64 {
        return None;
    }
    let i0 = p.floor();
    Some((i0 as usize, p - i0))
}

/// Shears one plane stored row-major in `src` into `dst`.
pub fn shear_plane<T: Scalar>(src: &[T], dst: &mut [T], rows: usize, cols: usize, alpha: f64, center: f64) {
    for s in 0..rows {
        let shift = (s as f64 - center) * alpha;
        let srow = &src[s * cols..(s + 1) * cols];
        let drow = &mut dst[s * cols..(s + 1) * cols];
        for (u, out) in drow.iter_mut().enumerate() {
            *out = match taps(u, shift, cols) {
                None => T::zero(),
                Some((i0, f)) if f == 0.0 => srow[i0],
                Some((i0, f)) => {
                    let f = T::of(f);
                    (T::one() - f) * srow[i0] + f * srow[i0 + 1]
                }
            };
        }
    }
}

/// Adjoint of [`shear_plane`]: scatters `grad_out` back through the bilinear
/// weights, accumulating into `grad_in`.
pub fn shear_plane_adjoint<T: Scalar>(
    grad_out: &[T],
    grad_in: &mut [T],
    rows: usize,
    cols: usize,
    alpha: f64,
    center: f64,
) {
    for s in 0..rows {
        let shift = (s as f64 - center) * alpha;
        let go = &grad_out[s * cols..(s + 1) * cols];
        let gi = &mut grad_in[s * cols..(s + 1) * cols];
        for (u, &g) in go.iter().enumerate() {
            match taps(u, shift, cols) {
                None => {}
                Some((i0, f)) if f == 0.0 => gi[i0] = gi[i0] + g,
                Some((i0, f)) => {
                    let f = T::of(f);
                    gi[i0] = gi[i0] + (T::one() - f) * g;
                    gi[i0 + 1] = gi[i0 + 1] + f * g;
                }
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(LfError::Invalid(format!("shear amount {alpha}")));
    }
    Ok(())
}

/// Shears every channel of `x` about an explicit centre.
pub fn shear_tensor_about<T: Scalar>(x: &Grid3<T>, alpha: f64, center: f64) -> Result<Grid3<T>> {
    check_alpha(alpha)?;
    if !x.is_finite() {
        return Err(LfError::NonFinite("shear input".into()));
    }
    let (rows, cols) = (x.rows(), x.cols());
    let mut out = Grid3::zeros(x.channels(), rows, cols);
    for c in 0..x.channels() {
        shear_plane(x.plane_slice(c), out.plane_slice_mut(c), rows, cols, alpha, center);
    }
    Ok(out)
}

/// `out(u, s, c) = x(u + (s - S/2) * alpha, s, c)`.
pub fn shear_tensor<T: Scalar>(x: &Grid3<T>, alpha: f64) -> Result<Grid3<T>> {
    shear_tensor_about(x, alpha, default_center(x.rows()))
}

pub fn shear_grid_about<T: Scalar>(x: &Grid2<T>, alpha: f64, center: f64) -> Result<Grid2<T>> {
    check_alpha(alpha)?;
    if !x.is_finite() {
        return Err(LfError::NonFinite("shear input".into()));
    }
    let mut out = Grid2::zeros(x.rows(), x.cols());
    shear_plane(x.as_slice(), out.as_mut_slice(), x.rows(), x.cols(), alpha, center);
    Ok(out)
}

/// Single-channel shear about `S / 2`; provenance is kept.
pub fn shear_epi<T: Scalar>(epi: &Epi<T>, alpha_h: f64) -> Result<Epi<T>> {
    let g = shear_grid_about(&epi.samples, alpha_h, default_center(epi.angular()))?;
    Ok(epi.with_samples(g))
}

/// Undoes a shear of `alpha_h` after angular upsampling by `alpha_s`.
///
/// The shear amount is `-alpha_h / alpha_s`. The centre is the image of the
/// input centre `S_in / 2` on the upsampled grid, `S_in = (S' + alpha_s - 1) / alpha_s`,
/// so input rows land back on their original columns.
pub fn unshear_for_upsampled<T: Scalar>(x: &Grid3<T>, alpha_h: f64, alpha_s: usize) -> Result<Grid3<T>> {
    if alpha_s < 1 {
        return Err(LfError::Invalid("alpha_s must be >= 1".into()));
    }
    let lr_rows = (x.rows() + alpha_s - 1) as f64 / alpha_s as f64;
    let center = upsampled_center(lr_rows / 2.0, alpha_s);
    shear_tensor_about(x, -alpha_h / alpha_s as f64, center)
}

/// [`unshear_for_upsampled`] for a grid sheared about an arbitrary input centre.
pub fn unshear_grid_about<T: Scalar>(x: &Grid2<T>, alpha_h: f64, alpha_s: usize, lr_center: f64) -> Result<Grid2<T>> {
    if alpha_s < 1 {
        return Err(LfError::Invalid("alpha_s must be >= 1".into()));
    }
    shear_grid_about(x, -alpha_h / alpha_s as f64, upsampled_center(lr_center, alpha_s))
}
