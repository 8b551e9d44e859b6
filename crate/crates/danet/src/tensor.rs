//! Dense `[N, C, S, U]` tensors and the GEMM entry point.

use lfaa_core::{Epi, Grid2, LfError, Result, Scalar};

/// Scalar types with a matrix-multiply kernel.
pub trait Real: Scalar {
    /// `c = beta * c + a * b` on strided row-major operands.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );
}

impl Real for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], sa: (isize, isize), b: &[f32], sb: (isize, isize), beta: f32, c: &mut [f32]) {
        debug_assert!(c.len() >= m * n);
        // SAFETY: the caller's strides address `a` and `b` within bounds, checked by `matmul`.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), sa.0, sa.1, b.as_ptr(), sb.0, sb.1, beta, c.as_mut_ptr(), n as isize, 1,
            )
        }
    }
}

impl Real for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (isize, isize), b: &[f64], sb: (isize, isize), beta: f64, c: &mut [f64]) {
        debug_assert!(c.len() >= m * n);
        // SAFETY: as above.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), sa.0, sa.1, b.as_ptr(), sb.0, sb.1, beta, c.as_mut_ptr(), n as isize, 1,
            )
        }
    }
}

/// `c (m x n) = op(a) * op(b)`, accumulating into `c` when `accumulate`.
///
/// `op(a)` is `m x k`; with `ta` the storage is `k x m` row-major. Same for `b`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], accumulate: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "matmul operand too short");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let sa = if ta { (1, m as isize) } else { (k as isize, 1) };
    let sb = if tb { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, a, sa, b, sb, beta, c);
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, data: vec![T::zero(); n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(LfError::Dimension(format!("{} values for tensor {n}x{c}x{h}x{w}", data.len())));
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Stacks single-channel EPIs of equal size into a batch.
    pub fn from_epis<S: Scalar>(epis: &[&Epi<S>]) -> Result<Self> {
        let first = epis.first().ok_or_else(|| LfError::Invalid("empty batch".into()))?;
        let (h, w) = first.samples.shape();
        let mut data = Vec::with_capacity(epis.len() * h * w);
        for e in epis {
            if e.samples.shape() != (h, w) {
                return Err(LfError::Dimension(format!("batch mixes {h}x{w} and {:?}", e.samples.shape())));
            }
            data.extend(e.samples.as_slice().iter().map(|&v| T::of(v.to_f64_lossy())));
        }
        Self::from_vec(epis.len(), 1, h, w, data)
    }

    pub fn from_grid(g: &Grid2<T>) -> Self {
        Self { n: 1, c: 1, h: g.rows(), w: g.cols(), data: g.as_slice().to_vec() }
    }

    /// Plane `(n, c)` as a grid.
    pub fn to_grid(&self, n: usize, c: usize) -> Grid2<T> {
        Grid2::from_vec(self.h, self.w, self.plane(n, c).to_vec()).expect("plane size")
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    /// Angular extent.
    pub fn height(&self) -> usize {
        self.h
    }

    /// Spatial extent.
    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.c * self.h * self.w;
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.c * self.h * self.w;
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let len = self.h * self.w;
        let start = (n * self.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let len = self.h * self.w;
        let start = (n * self.c + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn get(&self, n: usize, c: usize, s: usize, u: usize) -> T {
        self.data[((n * self.c + c) * self.h + s) * self.w + u]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other), "tensor shapes {:?} and {:?}", self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = *a + b);
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64_lossy())
            .fold(0.0, f64::max)
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| S::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Concatenation along channels.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| LfError::Invalid("empty concat".into()))?;
        let (n, h, w) = (first.n, first.h, first.w);
        if parts.iter().any(|p| p.n != n || p.h != h || p.w != w) {
            let shapes: Vec<_> = parts.iter().map(|p| p.shape()).collect();
            return Err(LfError::Dimension(format!("concat of {shapes:?}")));
        }
        let c: usize = parts.iter().map(|p| p.c).sum();
        let mut out = Self::zeros(n, c, h, w);
        for b in 0..n {
            let mut off = 0;
            let dst = out.sample_mut(b);
            for p in parts {
                let src = p.sample(b);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(out)
    }

    /// Channels `[start, start + count)`.
    pub fn channel_range(&self, start: usize, count: usize) -> Self {
        assert!(start + count <= self.c);
        let mut out = Self::zeros(self.n, count, self.h, self.w);
        let plane = self.h * self.w;
        for b in 0..self.n {
            let src = &self.sample(b)[start * plane..(start + count) * plane];
            out.sample_mut(b).copy_from_slice(src);
        }
        out
    }
}
