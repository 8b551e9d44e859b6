use std::f64::consts::PI;

use lfaa_core::metrics::psnr;
use lfaa_core::pyramid::*;
use lfaa_core::spectral::estimate_dominant_disparity;
use lfaa_core::synth::{render_epi, ScenePoint};
use lfaa_core::{Epi, Grid2};
use proptest::prelude::*;

fn random_grid(rows: usize, cols: usize, seed: u64) -> Grid2 {
    let mut x = seed | 1;
    Grid2::from_fn(rows, cols, |_, _| {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64
    })
}

fn line_epi(d: f64) -> Epi {
    // Irregular spacing: a periodic row makes slopes one period apart indistinguishable.
    let mut x = 5.0;
    let pts: Vec<ScenePoint> = (0..24)
        .map(|i| {
            x += [9.0, 13.0, 10.0, 15.0, 8.0][i % 5];
            ScenePoint {
                width: 2.5,
                ..ScenePoint::lambertian(x - 9.0, d, 0.3 + 0.06 * (i % 6) as f64)
            }
        })
        .collect();
    render_epi(&pts, 9, 256).unwrap()
}

#[test]
fn keys_kernel_values() {
    assert_eq!(keys_kernel(0.0), 1.0);
    assert_eq!(keys_kernel(1.0), 0.0);
    assert_eq!(keys_kernel(2.0), 0.0);
    assert!((keys_kernel(0.5) - 0.5625).abs() < 1e-15);
    assert!((keys_kernel(1.5) + 0.0625).abs() < 1e-15);
    assert_eq!(keys_kernel(-0.3), keys_kernel(0.3));
}

#[test]
fn factor_one_is_identity() {
    let g = random_grid(5, 33, 1);
    assert_eq!(downscale_spatial(&g, 1).unwrap(), g);
    assert_eq!(upscale_spatial(&g, 1).unwrap(), g);
    assert_eq!(downsample_angular_nearest(&g, 1, 0).unwrap(), g);
}

#[test]
fn constants_survive_resampling() {
    let g = Grid2::<f64>::filled(4, 37, 0.6);
    for f in [2, 3, 4] {
        let d = downscale_spatial(&g, f).unwrap();
        assert_eq!(d.cols(), 37usize.div_ceil(f));
        assert_eq!(d.rows(), 4);
        assert!(d.as_slice().iter().all(|v| (v - 0.6).abs() < 1e-12));
        let u = upscale_spatial(&d, f).unwrap();
        assert!(u.as_slice().iter().all(|v| (v - 0.6).abs() < 1e-12));
    }
}

#[test]
fn smooth_signal_round_trip() {
    let g = Grid2::from_fn(3, 256, |s, u| 0.5 + 0.3 * (2.0 * PI * u as f64 / 64.0 + s as f64).sin());
    for f in [2, 4] {
        let back = upscale_spatial(&downscale_spatial(&g, f).unwrap(), f).unwrap();
        let a = back.crop_cols(16, 240);
        let b = g.crop_cols(16, 240);
        assert!(psnr(&a, &b, 1.0).unwrap() >= 40.0);
        let m = downscale_spatial(&g, f).unwrap().mean();
        assert!((m - g.mean()).abs() / g.mean() < 1e-3);
    }
}

#[test]
fn downscaling_divides_disparity() {
    for f in [2usize, 4] {
        for d in [-8.0, 6.0, 3.0] {
            let small = downscale_spatial(&line_epi(d).samples, f).unwrap();
            let n = small.cols();
            let crop = Epi::synthetic(small.crop_cols(n / 4, 3 * n / 4));
            let est = estimate_dominant_disparity(&crop).unwrap();
            assert!((est - d / f as f64).abs() < 0.1, "d {d} f {f} est {est}");
        }
    }
}

#[test]
fn nearest_angular_rows() {
    let g = Grid2::from_fn(16, 3, |r, _| r as f64);
    let kept = downsample_angular_nearest(&g, 3, 0).unwrap();
    let rows: Vec<f64> = (0..kept.rows()).map(|r| kept.get(r, 0)).collect();
    assert_eq!(rows, vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0]);
    assert_eq!(downsample_angular_nearest(&g, 3, 2).unwrap().rows(), 5);
    assert!(downsample_angular_nearest(&g, 3, 3).is_err());
    let up = upsample_angular_cubic(&kept, 3).unwrap();
    assert_eq!(up.rows(), 16);
    for s in 0..6 {
        assert_eq!(up.row(3 * s), kept.row(s));
    }
}

#[test]
fn cubic_angular_reproduces_cubics() {
    // End extrapolation keeps quadratics exact all the way to the borders.
    let g = Grid2::from_fn(5, 2, |s, c| {
        let x = s as f64;
        0.2 + 0.1 * x - 0.03 * x * x + c as f64
    });
    let up = upsample_angular_cubic(&g, 4).unwrap();
    for r in 0..up.rows() {
        let x = r as f64 / 4.0;
        let expect = 0.2 + 0.1 * x - 0.03 * x * x;
        assert!((up.get(r, 0) - expect).abs() < 1e-12, "row {r}");
    }
}

#[test]
fn pyramid_edge_cases() {
    let c = Grid2::<f64>::filled(4, 64, 0.25);
    let p = laplacian_decompose(&c, &[4, 2, 1]).unwrap();
    assert_eq!(p.base.cols(), 16);
    assert_eq!(p.level_width(1), 32);
    assert_eq!(p.level_width(2), 64);
    assert!(p.residuals.iter().all(|r| r.as_slice().iter().all(|v: &f64| v.abs() < 1e-12)));
    let g = random_grid(3, 20, 4);
    let single = laplacian_decompose(&g, &[1]).unwrap();
    assert_eq!(single.base, g);
    assert!(single.residuals.is_empty());
    assert!(laplacian_decompose(&g, &[2, 4, 1]).is_err());
    assert!(laplacian_decompose(&g, &[4, 2]).is_err());
    assert!(laplacian_decompose(&g, &[3, 2, 1]).is_err());
}

proptest! {
    #[test]
    fn perfect_reconstruction(rows in 1usize..6, cols in 8usize..90, seed in any::<u64>(), three in any::<bool>()) {
        let g = random_grid(rows, cols, seed).map(|v| 20.0 * v - 10.0);
        let factors: &[usize] = if three { &[4, 2, 1] } else { &[2, 1] };
        let p = laplacian_decompose(&g, factors).unwrap();
        let back = laplacian_reconstruct(&p).unwrap();
        prop_assert!(back.max_abs_diff(&g) <= 1e-6);
    }

    #[test]
    fn dc_preserved_for_smooth_inputs(a in 0.1f64..0.9, b in -0.1f64..0.1, f in 2usize..5) {
        let g = Grid2::from_fn(2, 240, |_, u| a + b * (2.0 * PI * u as f64 / 240.0).cos());
        let d = downscale_spatial(&g, f).unwrap();
        prop_assert!((d.mean() - g.mean()).abs() / g.mean() < 1e-3);
    }
}
