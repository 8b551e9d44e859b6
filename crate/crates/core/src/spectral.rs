//! Fourier-domain analysis of EPIs and prefilter design.
//!
//! Frequencies are in radians per sample (`Ωu`) and radians per view (`Ωs`),
//! both in `[-π, π]`. The 2D transform uses the kernel
//! `exp(-iΩu·u + iΩs·s)` and unitary scaling, so a line `u = u0 - d·s`
//! concentrates on `d·Ωu + Ωs = 0` and energy is preserved exactly.

use std::f64::consts::PI;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::lightfield::Epi;
use crate::scalar::Scalar;

/// Centred 2D spectrum of an EPI: rows are `Ωs`, columns are `Ωu`.
#[derive(Clone, Debug)]
pub struct Spectrum<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

/// Signed frequency index of centred bin `i` out of `n`.
#[inline]
fn centered_index(i: usize, n: usize) -> isize {
    i as isize - (n / 2) as isize
}

/// Wraps an angle to `(-π, π]`.
#[inline]
pub fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

impl<T: Scalar> Spectrum<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn magnitude(&self, r: usize, c: usize) -> f64 {
        self.at(r, c).norm().to_f64_lossy()
    }

    /// `Ωu` of column `c`.
    pub fn omega_u(&self, c: usize) -> f64 {
        2.0 * PI * centered_index(c, self.cols) as f64 / self.cols as f64
    }

    /// `Ωs` of row `r`.
    pub fn omega_s(&self, r: usize) -> f64 {
        2.0 * PI * centered_index(r, self.rows) as f64 / self.rows as f64
    }

    /// Row holding `Ωs = 0`.
    pub fn zero_row(&self) -> usize {
        self.rows / 2
    }

    /// Column holding `Ωu = 0`.
    pub fn zero_col(&self) -> usize {
        self.cols / 2
    }

    pub fn bin_width_u(&self) -> f64 {
        2.0 * PI / self.cols as f64
    }

    pub fn bin_width_s(&self) -> f64 {
        2.0 * PI / self.rows as f64
    }

    /// Sum of squared magnitudes; equals the sample energy of the EPI.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr().to_f64_lossy()).sum()
    }

    /// Largest magnitude outside the DC bin.
    pub fn peak_non_dc(&self) -> f64 {
        let (r0, c0) = (self.zero_row(), self.zero_col());
        let mut peak = 0.0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if (r, c) != (r0, c0) {
                    peak = peak.max(self.magnitude(r, c));
                }
            }
        }
        peak
    }

    /// `ln(1 + |F|)`, for display.
    pub fn log_magnitude(&self) -> Grid2<f64> {
        Grid2::from_fn(self.rows, self.cols, |r, c| self.magnitude(r, c).ln_1p())
    }
}

/// Centred, unitary 2D DFT of an EPI.
pub fn epi_spectrum<T: Scalar>(epi: &Epi<T>) -> Result<Spectrum<T>> {
    grid_spectrum(&epi.samples)
}

pub fn grid_spectrum<T: Scalar>(g: &Grid2<T>) -> Result<Spectrum<T>> {
    let (rows, cols) = g.shape();
    if rows < 2 || cols < 2 {
        return Err(LfError::Dimension(format!(
            "spectrum needs at least 2x2 samples, got {rows}x{cols}"
        )));
    }
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(cols);
    let inv = planner.plan_fft_inverse(rows);

    let mut buf: Vec<Complex<T>> = g.as_slice().iter().map(|&v| Complex::new(v, T::zero())).collect();
    for row in buf.chunks_exact_mut(cols) {
        fwd.process(row);
    }
    let mut col = vec![Complex::new(T::zero(), T::zero()); rows];
    for c in 0..cols {
        for (r, x) in col.iter_mut().enumerate() {
            *x = buf[r * cols + c];
        }
        inv.process(&mut col);
        for (r, x) in col.iter().enumerate() {
            buf[r * cols + c] = *x;
        }
    }

    let scale = T::of(1.0 / ((rows * cols) as f64).sqrt());
    let mut data = vec![Complex::new(T::zero(), T::zero()); rows * cols];
    for r in 0..rows {
        let rs = (r + rows - rows / 2) % rows;
        for c in 0..cols {
            let cs = (c + cols - cols / 2) % cols;
            data[r * cols + c] = buf[rs * cols + cs] * scale;
        }
    }
    Ok(Spectrum { rows, cols, data })
}

/// Line support `d·Ωu + Ωs = ±β/Z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSupport {
    pub d: f64,
    pub beta: f64,
    pub z: f64,
}

impl SpectralSupport {
    pub fn new(d: f64, beta: f64, z: f64) -> Result<Self> {
        if !(d.is_finite() && beta.is_finite() && z.is_finite()) || beta < 0.0 || z <= 0.0 {
            return Err(LfError::Invalid(format!(
                "spectral support d={d}, beta={beta}, Z={z}"
            )));
        }
        Ok(Self { d, beta, z })
    }

    pub fn lambertian(d: f64) -> Self {
        Self { d, beta: 0.0, z: 1.0 }
    }

    pub fn with_ratio(d: f64, beta_over_z: f64) -> Result<Self> {
        Self::new(d, beta_over_z, 1.0)
    }

    pub fn beta_over_z(&self) -> f64 {
        self.beta / self.z
    }

    pub fn is_lambertian(&self) -> bool {
        self.beta == 0.0
    }
}

/// One replica band `d·Ωu + Ωs ∈ [lo, hi]`, centred at `2πk/Δs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaLine {
    pub k: i64,
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Replicas created by keeping every `angular_step`-th view, limited to
/// those whose centre lies inside the base band `|Ωs| ≤ π`.
pub fn predict_replicas(support: &SpectralSupport, angular_step: usize) -> Result<Vec<ReplicaLine>> {
    if angular_step == 0 {
        return Err(LfError::Invalid("angular step must be >= 1".into()));
    }
    let step = angular_step as f64;
    let kmax = (angular_step / 2) as i64;
    let half = support.beta_over_z();
    let mut out = Vec::new();
    for k in (-kmax..=kmax).filter(|&k| k != 0) {
        let center = 2.0 * PI * k as f64 / step;
        out.push(ReplicaLine {
            k,
            center,
            lo: center - half,
            hi: center + half,
        });
    }
    Ok(out)
}

/// Largest angular step at which the expanded spectra stay separate: `πZ/β + 1`.
pub fn overlap_limit(beta_over_z: f64) -> f64 {
    if beta_over_z <= 0.0 {
        f64::INFINITY
    } else {
        PI / beta_over_z + 1.0
    }
}

/// Whether replicas of a non-Lambertian spectrum overlap the base spectrum.
pub fn spectra_overlap(support: &SpectralSupport, angular_step: usize) -> bool {
    support.beta > 0.0 && angular_step as f64 > overlap_limit(support.beta_over_z())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AliasStatus {
    Aliased,
    /// No replica energy above the noise floor.
    Clean,
}

/// The reference alias: the lowest spatial frequency replica point on the
/// `Ωs = 0` axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AliasingReport {
    pub omega_u_pa: f64,
    pub omega_s_pa: f64,
    pub amplitude: f64,
    /// Strongest non-DC magnitude of the analysed spectrum.
    pub peak: f64,
    pub replica_index: i64,
    pub overlap_detected: bool,
    pub status: AliasStatus,
}

impl AliasingReport {
    /// A report built from known values rather than a measured spectrum.
    pub fn from_values(omega_u_pa: f64, amplitude: f64) -> Self {
        Self {
            omega_u_pa,
            omega_s_pa: 0.0,
            amplitude,
            peak: amplitude,
            replica_index: 1,
            overlap_detected: false,
            status: if amplitude > 0.0 {
                AliasStatus::Aliased
            } else {
                AliasStatus::Clean
            },
        }
    }
}

/// Relative noise floor for alias detection.
pub const NOISE_FLOOR: f64 = 0.01;

/// Spreads the rows of a sparsely sampled EPI onto the dense view grid,
/// filling the missing views with zeros.
pub fn zero_insert_angular<T: Scalar>(epi: &Epi<T>, angular_step: usize) -> Result<Epi<T>> {
    if angular_step == 0 {
        return Err(LfError::Invalid("angular step must be >= 1".into()));
    }
    let rows = crate::lightfield::upsampled_views(epi.angular(), angular_step);
    let mut g = Grid2::zeros(rows, epi.spatial());
    for s in 0..epi.angular() {
        g.row_mut(s * angular_step).copy_from_slice(epi.samples.row(s));
    }
    Ok(epi.with_samples(g))
}

/// Analytic position of the reference alias: the smallest `|Ωu|` at which a
/// `k = ±1` replica band crosses `Ωs = 0`. `None` when no crossing lies in
/// `[-π, π]`.
pub fn predict_reference_alias(support: &SpectralSupport, angular_step: usize) -> Option<(f64, i64)> {
    if angular_step < 2 {
        return None;
    }
    let base = 2.0 * PI / angular_step as f64;
    let b = support.beta_over_z();
    if b >= base {
        return Some((0.0, 1));
    }
    if support.d == 0.0 {
        return None;
    }
    let mut best: Option<(f64, i64)> = None;
    for k in [1i64, -1] {
        for sign in [-1.0, 1.0] {
            let w = (k as f64 * base + sign * b) / support.d;
            if w.abs() <= PI && best.is_none_or(|(bw, _)| w.abs() < bw.abs()) {
                best = Some((w, k));
            }
        }
    }
    best
}

/// Finds the reference alias in `spectrum`, the spectrum of a sparsely sampled
/// EPI on the dense view grid (see [`zero_insert_angular`]).
///
/// Searches the `Ωs = 0` row for bins on a `k = ±1` replica band of `support`
/// whose magnitude exceeds 1 % of the strongest non-DC magnitude, and returns
/// the one with the smallest `|Ωu|` (ties towards positive `Ωu`).
pub fn locate_reference_alias<T: Scalar>(
    spectrum: &Spectrum<T>,
    support: &SpectralSupport,
    angular_step: usize,
) -> Result<AliasingReport> {
    if angular_step < 2 {
        return Err(LfError::Invalid(
            "replicas need an angular step of at least 2".into(),
        ));
    }
    let peak = spectrum.peak_non_dc();
    let floor = NOISE_FLOOR * peak;
    let base = 2.0 * PI / angular_step as f64;
    let b = support.beta_over_z();
    let tol = 0.5 * support.d.abs() * spectrum.bin_width_u() + 1e-9;
    let row = spectrum.zero_row();

    let mut best: Option<(f64, i64, f64)> = None;
    for c in 0..spectrum.cols() {
        let w = spectrum.omega_u(c);
        let mag = spectrum.magnitude(row, c);
        if mag <= floor {
            continue;
        }
        for k in [1i64, -1] {
            let offset = wrap_pi(support.d * w - k as f64 * base);
            if offset.abs() <= b + tol {
                let better = match best {
                    None => true,
                    Some((bw, _, _)) => w.abs() < bw.abs() || (w.abs() == bw.abs() && w > bw),
                };
                if better {
                    best = Some((w, k, mag));
                }
            }
        }
    }

    let overlap_detected = spectra_overlap(support, angular_step);
    Ok(match best {
        Some((w, k, mag)) => AliasingReport {
            omega_u_pa: w,
            omega_s_pa: 0.0,
            amplitude: mag,
            peak,
            replica_index: k,
            overlap_detected,
            status: AliasStatus::Aliased,
        },
        None => {
            let (w, k) = predict_reference_alias(support, angular_step).unwrap_or((0.0, 1));
            AliasingReport {
                omega_u_pa: w,
                omega_s_pa: 0.0,
                amplitude: 0.0,
                peak,
                replica_index: k,
                overlap_detected,
                status: AliasStatus::Clean,
            }
        }
    })
}

/// Normalised Gaussian taps on `[-half_width, half_width]`; `sigma = 0` is
/// the unit impulse.
pub fn gaussian_kernel(sigma: f64, half_width: usize) -> Vec<f64> {
    let n = 2 * half_width + 1;
    if sigma <= 0.0 {
        let mut taps = vec![0.0; n];
        taps[half_width] = 1.0;
        return taps;
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let u = i as f64 - half_width as f64;
            (-u * u / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Frequency response of a symmetric kernel at `omega` (real-valued).
pub fn kernel_response(taps: &[f64], omega: f64) -> f64 {
    let h = (taps.len() / 2) as f64;
    taps.iter()
        .enumerate()
        .map(|(i, &t)| t * (omega * (i as f64 - h)).cos())
        .sum()
}

/// Support half-width used for designed prefilters: `ceil(4σ)`.
pub fn prefilter_half_width(sigma: f64) -> usize {
    (4.0 * sigma).ceil().max(0.0) as usize
}

/// Designed spatial prefilter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefilterSpec {
    /// Shape parameter of the returned taps.
    pub sigma: f64,
    /// Closed-form lower bound `sqrt(ln(A/γ) / (2π²Ω²))`.
    pub sigma_bound: f64,
    pub gamma: f64,
    /// Alias frequency after downscaling, `α_u·|Ωu(Pa)|`.
    pub omega: f64,
    /// The alias lies above the downscaled Nyquist limit and is removed by
    /// the anti-aliased resampler itself.
    pub removed_by_downscale: bool,
    pub taps: Vec<f64>,
}

impl PrefilterSpec {
    pub fn identity(gamma: f64) -> Self {
        Self {
            sigma: 0.0,
            sigma_bound: 0.0,
            gamma,
            omega: 0.0,
            removed_by_downscale: false,
            taps: vec![1.0],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn response(&self, omega: f64) -> f64 {
        kernel_response(&self.taps, omega)
    }
}

/// Closed-form shape parameter for attenuating an alias of `amplitude` at
/// frequency `omega` to `gamma`.
pub fn sigma_closed_form(amplitude: f64, gamma: f64, omega: f64) -> f64 {
    let ratio = (amplitude / gamma).max(1.0);
    if ratio == 1.0 {
        return 0.0;
    }
    (ratio.ln() / (2.0 * PI * PI * omega * omega)).sqrt()
}

const SIGMA_SEARCH_MAX: f64 = 2048.0;

fn attenuates(sigma: f64, omega: f64, target: f64) -> bool {
    let taps = gaussian_kernel(sigma, prefilter_half_width(sigma));
    kernel_response(&taps, omega).abs() <= target
}

/// Prefilter whose discrete response at the downscaled alias frequency is at
/// most `γ / A`.
///
/// The closed-form value is kept as `sigma_bound`. The returned `sigma` is the
/// smallest value at or above it (to bisection precision) whose truncated
/// kernel meets the attenuation target.
pub fn design_prefilter(report: &AliasingReport, gamma: f64, alpha_u: f64) -> Result<PrefilterSpec> {
    if !(gamma > 0.0) || !(report.amplitude >= 0.0) || !(alpha_u >= 1.0) {
        return Err(LfError::Invalid(format!(
            "prefilter design with gamma={gamma}, amplitude={}, alpha_u={alpha_u}",
            report.amplitude
        )));
    }
    let omega = alpha_u * report.omega_u_pa.abs();
    let ratio = (report.amplitude / gamma).max(1.0);
    if ratio == 1.0 {
        return Ok(PrefilterSpec {
            omega,
            ..PrefilterSpec::identity(gamma)
        });
    }
    if omega == 0.0 {
        return Err(LfError::Unfilterable {
            amplitude: report.amplitude,
            gamma,
        });
    }
    let bound = sigma_closed_form(report.amplitude, gamma, omega);
    if omega >= PI {
        return Ok(PrefilterSpec {
            sigma: 0.0,
            sigma_bound: bound,
            gamma,
            omega,
            removed_by_downscale: true,
            taps: vec![1.0],
        });
    }
    let target = 1.0 / ratio;
    let sigma = if attenuates(bound, omega, target) {
        bound
    } else {
        let mut lo = bound;
        let mut hi = bound.max(0.25);
        loop {
            hi *= 2.0;
            if attenuates(hi, omega, target) {
                break;
            }
            lo = hi;
            if hi > SIGMA_SEARCH_MAX {
                return Err(LfError::Unfilterable {
                    amplitude: report.amplitude,
                    gamma,
                });
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if attenuates(mid, omega, target) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(PrefilterSpec {
        sigma,
        sigma_bound: bound,
        gamma,
        omega,
        removed_by_downscale: false,
        taps: gaussian_kernel(sigma, prefilter_half_width(sigma)),
    })
}

/// One point of the σ–α_u trade-off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub gamma: f64,
    pub alpha_u: f64,
    pub sigma: f64,
}

/// Closed-form σ for every `(γ, α_u)` pair, γ-major.
pub fn sigma_alpha_curve(report: &AliasingReport, gammas: &[f64], alpha_us: &[f64]) -> Result<Vec<SigmaPoint>> {
    if report.omega_u_pa == 0.0 {
        return Err(LfError::Unfilterable {
            amplitude: report.amplitude,
            gamma: gammas.first().copied().unwrap_or(0.0),
        });
    }
    let mut out = Vec::with_capacity(gammas.len() * alpha_us.len());
    for &gamma in gammas {
        if !(gamma > 0.0 && gamma <= report.amplitude) {
            return Err(LfError::Invalid(format!(
                "gamma {gamma} outside (0, {}]",
                report.amplitude
            )));
        }
        for &alpha_u in alpha_us {
            if !(alpha_u >= 1.0) {
                return Err(LfError::Invalid(format!("alpha_u {alpha_u} < 1")));
            }
            let omega = alpha_u * report.omega_u_pa.abs();
            out.push(SigmaPoint {
                gamma,
                alpha_u,
                sigma: sigma_closed_form(report.amplitude, gamma, omega),
            });
        }
    }
    Ok(out)
}

/// CSV with header `gamma,alpha_u,sigma`.
pub fn curve_to_csv(points: &[SigmaPoint]) -> String {
    let mut s = String::from("gamma,alpha_u,sigma\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.gamma, p.alpha_u, p.sigma));
    }
    s
}

/// Parses the output of [`curve_to_csv`].
pub fn curve_from_csv(text: &str) -> Result<Vec<SigmaPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "gamma,alpha_u,sigma" => {}
        _ => return Err(LfError::Invalid("missing curve header".into())),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| LfError::Invalid(format!("bad curve row: {l}")))
            };
            Ok(SigmaPoint {
                gamma: num(0)?,
                alpha_u: num(1)?,
                sigma: num(2)?,
            })
        })
        .collect()
}

/// Slope search settings.
#[derive(Clone, Copy, Debug)]
pub struct SlopeSearch {
    pub max_abs: f64,
    pub step: f64,
}

impl SlopeSearch {
    pub fn for_width(cols: usize) -> Self {
        Self {
            max_abs: (cols as f64 / 4.0).min(24.0),
            step: 0.05,
        }
    }
}

/// Energy along `d·Ωu + Ωs = 0`, evaluated with the exact angular DTFT.
struct LineEnergy {
    rows: usize,
    cols: usize,
    freqs: Vec<f64>,
    /// Row spectra `R_s(k)` for the used spatial frequencies.
    coeffs: Vec<Vec<Complex<f64>>>,
}

impl LineEnergy {
    fn new<T: Scalar>(g: &Grid2<T>) -> Self {
        let (rows, cols) = g.shape();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(cols);
        let kmax = (cols - 1) / 2;
        let freqs: Vec<f64> = (1..=kmax).map(|k| 2.0 * PI * k as f64 / cols as f64).collect();
        let mut coeffs = vec![Vec::with_capacity(rows); kmax];
        let mut buf = vec![Complex::new(0.0, 0.0); cols];
        // Hann taper: content sliding across the window edges otherwise biases
        // the slope towards zero.
        let taper: Vec<f64> = (0..cols)
            .map(|u| 0.5 - 0.5 * (2.0 * PI * (u as f64 + 0.5) / cols as f64).cos())
            .collect();
        let mean = g.as_slice().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / (rows * cols) as f64;
        for s in 0..rows {
            for ((b, &v), w) in buf.iter_mut().zip(g.row(s)).zip(&taper) {
                *b = Complex::new((v.to_f64_lossy() - mean) * w, 0.0);
            }
            fft.process(&mut buf);
            for k in 1..=kmax {
                coeffs[k - 1].push(buf[k]);
            }
        }
        Self { rows, cols, freqs, coeffs }
    }

    fn total(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Energies at `d = i·step` for `i` in `-n..=n`.
    ///
    /// `|Σ_s R_s e^{-iωds}|²` expands into lag products `R_{s+m} R_s*` with
    /// phase `ω·d·m`. When `1 / step` is an integer every phase is a multiple
    /// of `2π / (cols / step)`, so one FFT of the binned lag products gives
    /// every candidate at once.
    fn sweep(&self, step: f64, n: i64) -> Vec<f64> {
        let per_px = (1.0 / step).round();
        let len = self.cols * per_px as usize;
        if per_px < 1.0 || (per_px * step - 1.0).abs() > 1e-12 || 2 * n as usize >= len {
            return (-n..=n).map(|i| self.at(i as f64 * step)).collect();
        }
        let mut bins = vec![Complex::new(0.0, 0.0); len];
        let mut base = 0.0;
        for (k, row) in self.coeffs.iter().enumerate() {
            base += row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            for m in 1..row.len() {
                let lag: Complex<f64> = (0..row.len() - m).map(|s| row[s + m] * row[s].conj()).sum();
                bins[((k + 1) * m) % len] += lag;
            }
        }
        FftPlanner::<f64>::new().plan_fft_forward(len).process(&mut bins);
        (-n..=n)
            .map(|i| base + 2.0 * bins[i.rem_euclid(len as i64) as usize].re)
            .collect()
    }

    fn at(&self, d: f64) -> f64 {
        let mut e = 0.0;
        for (w, row) in self.freqs.iter().zip(&self.coeffs) {
            let step = Complex::from_polar(1.0, -w * d);
            let mut rot = Complex::new(1.0, 0.0);
            let mut acc = Complex::new(0.0, 0.0);
            for z in row.iter().take(self.rows) {
                acc += z * rot;
                rot *= step;
            }
            e += acc.norm_sqr();
        }
        e
    }
}

/// Dominant line slope of an EPI in pixels per view (`u = u0 - d·s`).
pub fn estimate_dominant_disparity<T: Scalar>(epi: &Epi<T>) -> Result<f64> {
    estimate_dominant_disparity_with(epi, SlopeSearch::for_width(epi.spatial()))
}

/// Sweeps candidate slopes, keeps the one with the most line energy (ties
/// towards smaller `|d|`) and refines it with a parabola through its
/// neighbours.
pub fn estimate_dominant_disparity_with<T: Scalar>(epi: &Epi<T>, search: SlopeSearch) -> Result<f64> {
    dominant_slope(epi, search).map(|(d, _)| d)
}

/// Dominant slope and its coherence: the line energy at that slope over the
/// largest value any slope could reach, `S` times the total energy. Rows that
/// are exact shifted copies give 1; unrelated rows give about `1 / S`.
pub fn dominant_slope<T: Scalar>(epi: &Epi<T>, search: SlopeSearch) -> Result<(f64, f64)> {
    if epi.angular() < 4 {
        return Err(LfError::Invalid(format!(
            "slope estimation needs at least 4 views, got {}",
            epi.angular()
        )));
    }
    if epi.spatial() < 3 {
        return Err(LfError::Dimension("EPI too narrow".into()));
    }
    let le = LineEnergy::new(&epi.samples);
    let total = le.total();
    if !(total > 1e-18 * (epi.angular() * epi.spatial()) as f64) {
        return Err(LfError::UndefinedSlope);
    }
    let n = (search.max_abs / search.step).round() as i64;
    let cands: Vec<f64> = (-n..=n).map(|i| i as f64 * search.step).collect();
    let energies = le.sweep(search.step, n);
    let mut best = 0usize;
    for i in 1..cands.len() {
        let (e, eb) = (energies[i], energies[best]);
        let rel = (e - eb) / eb.max(f64::MIN_POSITIVE);
        if rel > 1e-12 || (rel.abs() <= 1e-12 && cands[i].abs() < cands[best].abs()) {
            best = i;
        }
    }
    let d = cands[best];
    let coherence = energies[best] / (epi.angular() as f64 * total);
    if best == 0 || best + 1 == cands.len() {
        return Ok((d, coherence));
    }
    let (em, e0, ep) = (energies[best - 1], energies[best], energies[best + 1]);
    let denom = em - 2.0 * e0 + ep;
    if denom >= 0.0 {
        return Ok((d, coherence));
    }
    let offset = 0.5 * (em - ep) / denom;
    Ok((d + offset.clamp(-0.5, 0.5) * search.step, coherence))
}
