//! Layer kernels: forward passes and their adjoints.
//!
//! Convolutions are cross-correlations with zero padding `K / 2`. A strided
//! convolution reads input position `o * s + k - K / 2` for output `o`; a
//! transposed convolution writes input `i` to output `i * s + k - K / 2`,
//! which makes it the exact adjoint of the convolution with the same geometry.

use lfaa_core::shear::{shear_plane, shear_plane_adjoint};

use crate::tensor::{matmul, Real, Tensor};

/// Geometry of a convolution from a `big` grid to a `small` one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    /// `(angular, spatial)` kernel extent.
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub big: (usize, usize),
    pub small: (usize, usize),
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.small.0 * self.small.1
    }

    /// Big-grid index read by tap `k` of small-grid position `o`, if inside.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, kernel: usize, len: usize) -> Option<usize> {
        let p = (o * stride + k) as isize - (kernel / 2) as isize;
        (p >= 0 && (p as usize) < len).then_some(p as usize)
    }
}

/// Unfolds `x` (`channels x big`) into a `rows x cols` patch matrix.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let (bh, bw) = g.big;
    let (oh, ow) = g.small;
    let mut r = 0;
    for c in 0..g.channels {
        let plane = &x[c * bh * bw..(c + 1) * bh * bw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut col[r * oh * ow..(r + 1) * oh * ow];
                for y in 0..oh {
                    let row = &mut dst[y * ow..(y + 1) * ow];
                    match ConvGeom::src(y, ky, g.sh, g.kh, bh) {
                        None => row.iter_mut().for_each(|v| *v = T::zero()),
                        Some(iy) => {
                            let srow = &plane[iy * bw..(iy + 1) * bw];
                            for (xo, v) in row.iter_mut().enumerate() {
                                *v = match ConvGeom::src(xo, kx, g.sw, g.kw, bw) {
                                    Some(ix) => srow[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulating into `x`.
pub fn col2im<T: Real>(col: &[T], g: &ConvGeom, x: &mut [T]) {
    let (bh, bw) = g.big;
    let (oh, ow) = g.small;
    let mut r = 0;
    for c in 0..g.channels {
        let plane = &mut x[c * bh * bw..(c + 1) * bh * bw];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &col[r * oh * ow..(r + 1) * oh * ow];
                for y in 0..oh {
                    if let Some(iy) = ConvGeom::src(y, ky, g.sh, g.kh, bh) {
                        let drow = &mut plane[iy * bw..(iy + 1) * bw];
                        for (xo, &v) in src[y * ow..(y + 1) * ow].iter().enumerate() {
                            if let Some(ix) = ConvGeom::src(xo, kx, g.sw, g.kw, bw) {
                                drow[ix] = drow[ix] + v;
                            }
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

fn add_bias<T: Real>(y: &mut [T], bias: &[T], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        y[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Real>(dy: &[T], db: &mut [T], plane: usize) {
    for (c, g) in db.iter_mut().enumerate() {
        *g = *g + dy[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
    }
}

/// Strided convolution. `weight` is `out x (in * kh * kw)`.
pub fn conv_forward<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T], g: &ConvGeom, cout: usize) -> Tensor<T> {
    let (oh, ow) = g.small;
    let mut y = Tensor::zeros(x.batch(), cout, oh, ow);
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for n in 0..x.batch() {
        im2col(x.sample(n), g, &mut col);
        let yn = y.sample_mut(n);
        matmul(cout, g.rows(), g.cols(), weight, false, &col, false, yn, false);
        add_bias(yn, bias, oh * ow);
    }
    y
}

/// Gradients of [`conv_forward`]; `dw` and `db` accumulate.
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    weight: &[T],
    g: &ConvGeom,
    cout: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Tensor<T> {
    let (bh, bw) = g.big;
    let mut dx = Tensor::zeros(x.batch(), g.channels, bh, bw);
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    let mut dcol = vec![T::zero(); g.rows() * g.cols()];
    for n in 0..x.batch() {
        im2col(x.sample(n), g, &mut col);
        let dyn_ = dy.sample(n);
        matmul(cout, g.cols(), g.rows(), dyn_, false, &col, true, dw, true);
        bias_grad(dyn_, db, g.cols());
        matmul(g.rows(), cout, g.cols(), weight, true, dyn_, false, &mut dcol, false);
        col2im(&dcol, g, dx.sample_mut(n));
    }
    dx
}

/// Transposed convolution from `small` to `big`. `weight` is `in x (out * kh * kw)`.
pub fn deconv_forward<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T], g: &ConvGeom, cin: usize) -> Tensor<T> {
    let (bh, bw) = g.big;
    let mut y = Tensor::zeros(x.batch(), g.channels, bh, bw);
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for n in 0..x.batch() {
        matmul(g.rows(), cin, g.cols(), weight, true, x.sample(n), false, &mut col, false);
        let yn = y.sample_mut(n);
        col2im(&col, g, yn);
        add_bias(yn, bias, bh * bw);
    }
    y
}

pub fn deconv_backward<T: Real>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    weight: &[T],
    g: &ConvGeom,
    cin: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Tensor<T> {
    let (oh, ow) = g.small;
    let mut dx = Tensor::zeros(x.batch(), cin, oh, ow);
    let mut dcol = vec![T::zero(); g.rows() * g.cols()];
    for n in 0..x.batch() {
        let dyn_ = dy.sample(n);
        bias_grad(dyn_, db, g.big.0 * g.big.1);
        im2col(dyn_, g, &mut dcol);
        matmul(cin, g.rows(), g.cols(), weight, false, &dcol, false, dx.sample_mut(n), false);
        matmul(cin, g.cols(), g.rows(), x.sample(n), false, &dcol, true, dw, true);
    }
    dx
}

/// Grouped 1D filtering along `u`: output channel `c` filters input `c / m`
/// with its own taps. `weight` is `cout x len`.
pub fn prefilter_forward<T: Real>(x: &Tensor<T>, weight: &[T], cout: usize, len: usize) -> Tensor<T> {
    let (n, cin, h, w) = (x.batch(), x.channels(), x.height(), x.width());
    let m = cout / cin;
    let half = len / 2;
    let mut y = Tensor::zeros(n, cout, h, w);
    for b in 0..n {
        for co in 0..cout {
            let taps = &weight[co * len..(co + 1) * len];
            let src = x.plane(b, co / m).to_vec();
            let dst = y.plane_mut(b, co);
            for s in 0..h {
                let srow = &src[s * w..(s + 1) * w];
                let drow = &mut dst[s * w..(s + 1) * w];
                for (k, &t) in taps.iter().enumerate() {
                    // out[u] += t * in[u + k - half]
                    let lo = half.saturating_sub(k);
                    let hi = (w + half).saturating_sub(k).min(w);
                    for u in lo..hi {
                        drow[u] = drow[u] + t * srow[u + k - half];
                    }
                }
            }
        }
    }
    y
}

pub fn prefilter_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>, weight: &[T], len: usize, dw: &mut [T]) -> Tensor<T> {
    let (n, cin, h, w) = (x.batch(), x.channels(), x.height(), x.width());
    let cout = dy.channels();
    let m = cout / cin;
    let half = len / 2;
    let mut dx = Tensor::zeros(n, cin, h, w);
    for b in 0..n {
        for co in 0..cout {
            let taps = &weight[co * len..(co + 1) * len];
            let src = x.plane(b, co / m);
            let g = dy.plane(b, co);
            let mut acc = vec![T::zero(); h * w];
            for s in 0..h {
                let srow = &src[s * w..(s + 1) * w];
                let grow = &g[s * w..(s + 1) * w];
                let arow = &mut acc[s * w..(s + 1) * w];
                for (k, &t) in taps.iter().enumerate() {
                    let lo = half.saturating_sub(k);
                    let hi = (w + half).saturating_sub(k).min(w);
                    let mut dk = T::zero();
                    for u in lo..hi {
                        dk = dk + grow[u] * srow[u + k - half];
                        arow[u + k - half] = arow[u + k - half] + t * grow[u];
                    }
                    dw[co * len + k] = dw[co * len + k] + dk;
                }
            }
            let dst = dx.plane_mut(b, co / m);
            dst.iter_mut().zip(&acc).for_each(|(d, &a)| *d = *d + a);
        }
    }
    dx
}

pub fn shear_forward<T: Real>(x: &Tensor<T>, alpha: f64, center: f64) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut y = Tensor::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            shear_plane(x.plane(b, ch), y.plane_mut(b, ch), h, w, alpha, center);
        }
    }
    y
}

/// Routes gradients back through the bilinear weights of [`shear_forward`].
pub fn shear_backward<T: Real>(dy: &Tensor<T>, alpha: f64, center: f64) -> Tensor<T> {
    let [n, c, h, w] = dy.shape();
    let mut dx = Tensor::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            shear_plane_adjoint(dy.plane(b, ch), dx.plane_mut(b, ch), h, w, alpha, center);
        }
    }
    dx
}

pub fn leaky_forward<T: Real>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let a = T::of(slope);
    let mut y = x.clone();
    y.as_mut_slice().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = *v * a
        }
    });
    y
}

pub fn leaky_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>, slope: f64) -> Tensor<T> {
    let a = T::of(slope);
    let mut dx = dy.clone();
    dx.as_mut_slice().iter_mut().zip(x.as_slice()).for_each(|(g, &v)| {
        if v < T::zero() {
            *g = *g * a
        }
    });
    dx
}

pub const NORM_EPS: f64 = 1e-5;

/// Cached values of a normalisation forward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Batch mean and (biased) variance, `None` in inference mode.
    pub batch_stats: Option<(Vec<T>, Vec<T>)>,
}

/// Per-channel normalisation over batch and both grid axes.
///
/// With `running = Some((mean, var))` the given statistics are used and the
/// layer is a fixed affine map; otherwise batch statistics are computed.
pub fn norm_forward<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T], running: Option<(&[T], &[T])>) -> (Tensor<T>, NormCache<T>) {
    let [n, c, h, w] = x.shape();
    let count = T::of((n * h * w) as f64);
    let (mean, var, batch) = match running {
        Some((m, v)) => (m.to_vec(), v.to_vec(), false),
        None => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let m = (0..n).map(|b| x.plane(b, ch).iter().copied().sum::<T>()).sum::<T>() / count;
                let v = (0..n)
                    .map(|b| x.plane(b, ch).iter().map(|&v| (v - m) * (v - m)).sum::<T>())
                    .sum::<T>()
                    / count;
                mean[ch] = m;
                var[ch] = v;
            }
            (mean, var, true)
        }
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(NORM_EPS)).sqrt()).collect();
    let mut xhat = Tensor::zeros(n, c, h, w);
    let mut y = Tensor::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let xh = xhat.plane_mut(b, ch);
            for (o, &v) in xh.iter_mut().zip(src) {
                *o = (v - mean[ch]) * inv_std[ch];
            }
            let xh = xhat.plane(b, ch).to_vec();
            for (o, v) in y.plane_mut(b, ch).iter_mut().zip(xh) {
                *o = gamma[ch] * v + beta[ch];
            }
        }
    }
    let batch_stats = batch.then_some((mean, var));
    (y, NormCache { xhat, inv_std, batch_stats })
}

pub fn norm_backward<T: Real>(dy: &Tensor<T>, cache: &NormCache<T>, gamma: &[T], dgamma: &mut [T], dbeta: &mut [T]) -> Tensor<T> {
    let [n, c, h, w] = dy.shape();
    let count = T::of((n * h * w) as f64);
    let mut dx = Tensor::zeros(n, c, h, w);
    for ch in 0..c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..n {
            for (&g, &xh) in dy.plane(b, ch).iter().zip(cache.xhat.plane(b, ch)) {
                sum_g = sum_g + g;
                sum_gx = sum_gx + g * xh;
            }
        }
        dgamma[ch] = dgamma[ch] + sum_gx;
        dbeta[ch] = dbeta[ch] + sum_g;
        let k = gamma[ch] * cache.inv_std[ch];
        for b in 0..n {
            let xh = cache.xhat.plane(b, ch).to_vec();
            let g = dy.plane(b, ch).to_vec();
            for ((o, g), xh) in dx.plane_mut(b, ch).iter_mut().zip(g).zip(xh) {
                *o = if cache.batch_stats.is_some() {
                    k * (g - sum_g / count - xh * sum_gx / count)
                } else {
                    k * g
                };
            }
        }
    }
    dx
}

/// Mean absolute difference.
pub fn loss_l1<T: Real>(pred: &Tensor<T>, label: &Tensor<T>) -> f64 {
    assert!(pred.same_shape(label), "loss on {:?} vs {:?}", pred.shape(), label.shape());
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred.as_slice().iter().zip(label.as_slice()).map(|(&a, &b)| (a - b).abs().to_f64_lossy()).sum();
    sum / pred.len() as f64
}

/// Gradient of [`loss_l1`] with respect to `pred`; zero where the two agree.
pub fn loss_l1_grad<T: Real>(pred: &Tensor<T>, label: &Tensor<T>) -> Tensor<T> {
    let scale = T::one() / T::of(pred.len().max(1) as f64);
    let mut g = pred.clone();
    g.as_mut_slice().iter_mut().zip(label.as_slice()).for_each(|(p, &l)| {
        let d = *p - l;
        *p = if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        };
    });
    g
}
