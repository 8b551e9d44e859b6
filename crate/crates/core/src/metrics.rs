//! Image quality metrics.

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::scalar::Scalar;

/// Value reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

fn check<T: Scalar>(a: &Grid2<T>, b: &Grid2<T>) -> Result<()> {
    a.check_same_shape(b)?;
    if a.as_slice().is_empty() {
        return Err(LfError::Dimension("empty image".into()));
    }
    Ok(())
}

pub fn mse<T: Scalar>(a: &Grid2<T>, b: &Grid2<T>) -> Result<f64> {
    check(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let e = x.to_f64_lossy() - y.to_f64_lossy();
            e * e
        })
        .sum();
    Ok(sum / a.as_slice().len() as f64)
}

/// PSNR from a mean squared error, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

pub fn psnr<T: Scalar>(a: &Grid2<T>, b: &Grid2<T>, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// PSNR over the rows not listed in `excluded`.
pub fn psnr_rows<T: Scalar>(a: &Grid2<T>, b: &Grid2<T>, excluded: &[usize], peak: f64) -> Result<f64> {
    check(a, b)?;
    let rows: Vec<usize> = (0..a.rows()).filter(|r| !excluded.contains(r)).collect();
    if rows.is_empty() {
        return Err(LfError::Invalid("every row is excluded".into()));
    }
    psnr(&a.select_rows(&rows), &b.select_rows(&rows), peak)
}

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; WINDOW] {
    let h = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, x) in w.iter_mut().enumerate() {
        let u = i as f64 - h;
        *x = (-u * u / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(x: &[f64], rows: usize, cols: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let oc = cols - WINDOW + 1;
    let or = rows - WINDOW + 1;
    let mut tmp = vec![0.0; rows * oc];
    for r in 0..rows {
        for c in 0..oc {
            tmp[r * oc + c] = (0..WINDOW).map(|k| w[k] * x[r * cols + c + k]).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for c in 0..oc {
            out[r * oc + c] = (0..WINDOW).map(|k| w[k] * tmp[(r + k) * oc + c]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (σ = 1.5), averaged over
/// all valid window positions.
pub fn ssim<T: Scalar>(a: &Grid2<T>, b: &Grid2<T>, peak: f64) -> Result<f64> {
    check(a, b)?;
    let (rows, cols) = a.shape();
    if rows < WINDOW || cols < WINDOW {
        return Err(LfError::Dimension(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} samples, got {rows}x{cols}"
        )));
    }
    let x: Vec<f64> = a.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let y: Vec<f64> = b.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let w = gaussian_window();
    let mx = filter_valid(&x, rows, cols, &w);
    let my = filter_valid(&y, rows, cols, &w);
    let sxx = filter_valid(&xx, rows, cols, &w);
    let syy = filter_valid(&yy, rows, cols, &w);
    let sxy = filter_valid(&xy, rows, cols, &w);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok((total / n as f64).clamp(-1.0, 1.0))
}
