use lfaa_core::shear::{shear_epi, shear_grid_about, shear_plane_adjoint, shear_tensor, unshear_for_upsampled};
use lfaa_core::pyramid::upsample_angular_cubic;
use lfaa_core::spectral::estimate_dominant_disparity;
use lfaa_core::synth::{render_epi, ScenePoint};
use lfaa_core::{Epi, Grid2, Grid3};
use proptest::prelude::*;

fn line_epi(d: f64, views: usize, cols: usize) -> Epi {
    // Irregular spacing, so a shift by one spacing is not another valid slope.
    let mut pts = Vec::new();
    let mut u = 4.0;
    let mut i = 0u64;
    while u < cols as f64 - 4.0 {
        let h = (i.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 40) as f64 / (1u64 << 24) as f64;
        pts.push(ScenePoint {
            width: 2.0,
            ..ScenePoint::lambertian(u, d, 0.3 + 0.5 * h)
        });
        u += 6.0 + 11.0 * ((h * 7.3).fract());
        i += 1;
    }
    render_epi(&pts, views, cols).unwrap()
}

fn random_grid(rows: usize, cols: usize, seed: u64) -> Grid2 {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Grid2::from_fn(rows, cols, |_, _| {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 11) as f64 / (1u64 << 53) as f64
    })
}

#[test]
fn zero_shear_is_identity() {
    let g = random_grid(7, 31, 3);
    let t = Grid3::from(g.clone());
    assert_eq!(shear_tensor(&t, 0.0).unwrap(), t);
    let epi = Epi::synthetic(g);
    assert_eq!(shear_epi(&epi, 0.0).unwrap(), epi);
    let up = Grid3::from(random_grid(13, 20, 9));
    assert_eq!(unshear_for_upsampled(&up, 0.0, 3).unwrap(), up);
}

#[test]
fn shear_verticalizes_a_line() {
    let epi = render_epi(&[ScenePoint::lambertian(40.0, 3.0, 0.8)], 8, 80).unwrap();
    let out = shear_epi(&epi, -3.0).unwrap();
    for s in 1..8 {
        for u in 20..60 {
            assert!((out.samples.get(s, u) - out.samples.get(0, u)).abs() < 1e-12);
        }
    }
    assert_eq!(out.provenance, epi.provenance);
}

#[test]
fn matches_definition_with_bilinear_and_zero_fill() {
    let g = random_grid(5, 12, 11);
    let alpha = 0.7;
    let out = shear_tensor(&Grid3::from(g.clone()), alpha).unwrap();
    for s in 0..5 {
        for u in 0..12 {
            let p = u as f64 + (s as f64 - 2.5) * alpha;
            let expect = if !(0.0..=11.0).contains(&p) {
                0.0
            } else {
                let i = p.floor() as usize;
                let f = p - i as f64;
                if f == 0.0 {
                    g.get(s, i)
                } else {
                    (1.0 - f) * g.get(s, i) + f * g.get(s, i + 1)
                }
            };
            assert!((out.get(0, s, u) - expect).abs() < 1e-15);
        }
    }
}

#[test]
fn integer_unshear_restores_interior() {
    let g = random_grid(6, 40, 5);
    let x = Grid3::from(g.clone());
    let back = unshear_for_upsampled(&shear_tensor(&x, 3.0).unwrap(), 3.0, 1).unwrap();
    for s in 0..6 {
        for u in 9..31 {
            assert_eq!(back.get(0, s, u), g.get(s, u));
        }
    }
}

#[test]
fn upsampled_vertical_line_regains_slope() {
    // Vertical after shearing by -9: unshearing the x3 upsampled grid by
    // -(-9)/3 gives 3 px per fine view, i.e. 9 px per input view.
    let epi = render_epi(&[ScenePoint::lambertian(60.0, 0.0, 0.8), ScenePoint::lambertian(80.0, 0.0, 0.6)], 6, 140).unwrap();
    let up = upsample_angular_cubic(&epi.samples, 3).unwrap();
    let out = unshear_for_upsampled(&Grid3::from(up), -9.0, 3).unwrap();
    let d = estimate_dominant_disparity(&Epi::synthetic(out.plane(0))).unwrap();
    assert!((d - 3.0).abs() < 0.1, "slope {d}");
}

#[test]
fn integer_shear_gradient_is_a_permutation() {
    let (rows, cols) = (4, 10);
    let grad = random_grid(rows, cols, 21);
    let mut back = vec![0.0; rows * cols];
    shear_plane_adjoint(grad.as_slice(), &mut back, rows, cols, 2.0, 2.0);
    for s in 0..rows {
        let shift = 2 * s as isize - 4;
        for u in 0..cols as isize {
            let src = u + shift;
            if (0..cols as isize).contains(&src) {
                assert_eq!(back[s * cols + src as usize], grad.get(s, u as usize));
            }
        }
    }
    let total: f64 = back.iter().sum();
    let kept: f64 = (0..rows)
        .flat_map(|s| (0..cols).map(move |u| (s, u)))
        .filter(|&(s, u)| (0..cols as isize).contains(&(u as isize + 2 * s as isize - 4)))
        .map(|(s, u)| grad.get(s, u))
        .sum();
    assert!((total - kept).abs() < 1e-12);
}

#[test]
fn odd_view_count_uses_exact_centre() {
    let g = random_grid(3, 16, 2);
    let out = shear_grid_about(&g, 1.0, 1.5).unwrap();
    let via_tensor = shear_tensor(&Grid3::from(g), 1.0).unwrap();
    assert_eq!(via_tensor.plane(0), out);
}

proptest! {
    #[test]
    fn integer_round_trip(a in -4i32..=4, half in 1usize..4, seed in any::<u64>()) {
        let rows = 2 * half;
        let cols = 48;
        let g = random_grid(rows, cols, seed);
        let x = Grid3::from(g.clone());
        let a = a as f64;
        let back = shear_tensor(&shear_tensor(&x, a).unwrap(), -a).unwrap();
        let band = (a.abs() * rows as f64 / 2.0) as usize;
        for s in 0..rows {
            for u in band..cols.saturating_sub(band) {
                prop_assert_eq!(back.get(0, s, u), g.get(s, u));
            }
        }
    }

    #[test]
    fn linearity(alpha in -5.0f64..5.0, a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        let x = random_grid(5, 20, seed);
        let y = random_grid(5, 20, seed ^ 0xabcdef);
        let combo = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let lhs = shear_grid_about(&combo, alpha, 2.5).unwrap();
        let sx = shear_grid_about(&x, alpha, 2.5).unwrap();
        let sy = shear_grid_about(&y, alpha, 2.5).unwrap();
        let rhs = sx.zip_map(&sy, |p, q| a * p + b * q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn slope_transport(d in -4.0f64..4.0, alpha in -4.0f64..4.0) {
        let epi = line_epi(d, 9, 192);
        let out = shear_epi(&epi, alpha).unwrap();
        let cropped = Epi::synthetic(out.samples.crop_cols(48, 144));
        let est = estimate_dominant_disparity(&cropped).unwrap();
        prop_assert!((est - (d + alpha)).abs() < 0.1, "d {} alpha {} est {}", d, alpha, est);
    }

    #[test]
    fn range_width_preserved(d1 in -3.0f64..0.0, gap in 2.0f64..5.0, alpha in -3.0f64..3.0) {
        let d2 = d1 + gap;
        let make = |d: f64| {
            let e = line_epi(d, 9, 192);
            Epi::synthetic(shear_epi(&e, alpha).unwrap().samples.crop_cols(48, 144))
        };
        let a = estimate_dominant_disparity(&make(d1)).unwrap();
        let b = estimate_dominant_disparity(&make(d2)).unwrap();
        prop_assert!(((b - a) - gap).abs() < 0.1);
    }
}
