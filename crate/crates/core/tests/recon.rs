use lfaa_core::metrics::psnr_rows;
use lfaa_core::recon::*;
use lfaa_core::synth::{render_dense_oracle, textured_points, ScenePoint};
use lfaa_core::{Epi, Grid2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CROP: usize = 48;

fn oracle(seed: u64, d: f64, s_lr: usize, cols: usize, alpha_s: usize) -> (Epi, Epi) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = textured_points(&mut rng, cols, s_lr, d, (8.0, 16.0), 1.2);
    render_dense_oracle(&pts, alpha_s * s_lr - (alpha_s - 1), cols, alpha_s).unwrap()
}

/// PSNR over synthesized rows and interior columns.
fn interior_psnr(out: &Grid2, truth: &Grid2, alpha_s: usize) -> f64 {
    let cols = out.cols();
    let inputs: Vec<usize> = (0..out.rows()).step_by(alpha_s).collect();
    psnr_rows(&out.crop_cols(CROP, cols - CROP), &truth.crop_cols(CROP, cols - CROP), &inputs, 1.0).unwrap()
}

#[test]
fn config_validation() {
    assert!(ReconConfig::default().validate().is_ok());
    assert!(ReconConfig::default().with_shears(vec![]).validate().is_err());
    assert!(ReconConfig::default().with_shears(vec![3.0, 0.0]).validate().is_err());
    assert!(ReconConfig::default().with_alpha_s(1).validate().is_err());
    assert_eq!(ReconConfig::default().shears, vec![-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0]);
    assert_eq!(ReconConfig::default().residual_bound(), 1.5);
    assert_eq!(ReconConfig::default().with_shears(vec![0.0]).residual_bound(), 0.5);
    assert_eq!(ReconConfig::integer_shears(2), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    assert_eq!("global_best".parse::<Fusion>().unwrap(), Fusion::GlobalBest);
    assert!("best".parse::<Fusion>().is_err());
    let (lr, _) = oracle(0, 0.0, 6, 256, 4);
    let one = Epi::synthetic(lr.samples.select_rows(&[0]));
    assert!(reconstruct_single_shear(&one, 0.0, &ReconConfig::default()).is_err());
}

#[test]
fn still_scene_is_reproduced() {
    for alpha_s in [2, 3, 4] {
        let (lr, hr) = oracle(1, 0.0, 6, 256, alpha_s);
        let cfg = ReconConfig::default().with_alpha_s(alpha_s);
        let c = reconstruct_single_shear(&lr, 0.0, &cfg).unwrap();
        assert_eq!(c.output.angular(), 6 * alpha_s - (alpha_s - 1));
        for r in 0..c.output.angular() {
            let diff = c.output.samples.row(r).iter().zip(lr.samples.row(0)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-3, "alpha_s {alpha_s} row {r}: {diff}");
        }
        assert!(interior_psnr(&c.output.samples, &hr.samples, alpha_s) >= 50.0);
    }
}

#[test]
fn matched_shear_recovers_large_disparity() {
    let (lr, hr) = oracle(2, 6.0, 6, 256, 3);
    let cfg = ReconConfig::default().with_alpha_s(3);
    let c = reconstruct_single_shear(&lr, -6.0, &cfg).unwrap();
    let p = interior_psnr(&c.output.samples, &hr.samples, 3);
    assert!(p >= 45.0, "{p}");
    assert!(c.residual_disparity().abs() < 0.1);
}

#[test]
fn wrong_shear_is_worse() {
    let (lr, hr) = oracle(3, 6.0, 6, 256, 4);
    let cfg = ReconConfig::default();
    let good = reconstruct_single_shear(&lr, -6.0, &cfg).unwrap();
    let bad = reconstruct_single_shear(&lr, 0.0, &cfg).unwrap();
    let pg = interior_psnr(&good.output.samples, &hr.samples, 4);
    let pb = interior_psnr(&bad.output.samples, &hr.samples, 4);
    assert!(pg > pb, "{pg} vs {pb}");
}

#[test]
fn input_rows_survive() {
    let (lr, _) = oracle(4, 2.3, 5, 192, 4);
    for a in [-3.0, 0.0, 1.5] {
        let c = reconstruct_single_shear(&lr, a, &ReconConfig::default()).unwrap();
        for s in 0..5 {
            assert_eq!(c.output.samples.row(4 * s), lr.samples.row(s));
        }
    }
}

#[test]
fn oracle_candidate_scores_only_smoothness() {
    let (lr, hr) = oracle(5, 1.0, 6, 128, 4);
    let e = consistency_error(&hr, &lr, 4, 16, 0.0).unwrap();
    assert_eq!(e.len(), 8);
    // Independent evaluation of the smoothness term.
    for (p, &ep) in e.iter().enumerate() {
        let mut acc = 0.0;
        for r in 1..hr.angular() - 1 {
            for u in 16 * p..16 * (p + 1) {
                let g = &hr.samples;
                acc += (g.get(r - 1, u) - 2.0 * g.get(r, u) + g.get(r + 1, u)).abs();
            }
        }
        let want = SMOOTHNESS_WEIGHT * acc / ((hr.angular() - 2) * 16) as f64;
        assert!((ep - want).abs() < 1e-12, "patch {p}");
    }
}

#[test]
fn corrupted_patch_scores_worst() {
    let (lr, hr) = oracle(6, 0.5, 6, 128, 3);
    let mut bad = hr.samples.clone();
    for s in 0..bad.rows() {
        for u in 48..64 {
            bad.set(s, u, 1.0 - bad.get(s, u));
        }
    }
    let e = consistency_error(&hr.with_samples(bad), &lr, 3, 16, 0.0).unwrap();
    let worst = (0..e.len()).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
    assert_eq!(worst, 3);
    assert!(e.iter().enumerate().all(|(p, &x)| p == 3 || x < e[3]));
    assert!(consistency_error(&hr, &lr, 4, 16, 0.0).is_err());
}

#[test]
fn matched_candidate_is_more_consistent() {
    // At alpha_s = 3 re-shearing by 2 px per view is exact, so the score
    // sees the candidate's own frame without extra interpolation blur.
    let (lr, _) = oracle(7, 6.0, 6, 256, 3);
    let cfg = ReconConfig::default().with_alpha_s(3);
    let good = reconstruct_single_shear(&lr, -6.0, &cfg).unwrap();
    let bad = reconstruct_single_shear(&lr, 0.0, &cfg).unwrap();
    let eg = consistency_error(&good.output, &lr, 3, 16, -6.0).unwrap();
    let eb = consistency_error(&bad.output, &lr, 3, 16, 0.0).unwrap();
    let wins = eg.iter().zip(&eb).filter(|(g, b)| g < b).count();
    assert!(wins as f64 >= 0.95 * eg.len() as f64, "{wins} of {}", eg.len());
}

/// Three bands of texture at disparities -6, 0 and 6.
fn regions(seed: u64, s_lr: usize, alpha_s: usize) -> (Epi, Epi, usize) {
    banded(seed, s_lr, alpha_s, [-6.0, 0.0, 6.0])
}

fn banded(seed: u64, s_lr: usize, alpha_s: usize, disparities: [f64; 3]) -> (Epi, Epi, usize) {
    let band = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for (i, d) in disparities.into_iter().enumerate() {
        let lo = (i * band) as f64;
        let mut u = lo + rng.random_range(0.0..8.0);
        while u < lo + band as f64 {
            pts.push(ScenePoint::lambertian(u, d, rng.random_range(0.2..0.8)));
            u += rng.random_range(8.0..16.0);
        }
    }
    let (lr, hr) = render_dense_oracle(&pts, alpha_s * s_lr - (alpha_s - 1), 3 * band, alpha_s).unwrap();
    (lr, hr, band)
}

#[test]
fn fusion_picks_the_region_shear() {
    let (lr, _, band) = regions(8, 6, 4);
    let rec = reconstruct_multi(&lr, &ReconConfig::default()).unwrap();
    let mut hits = 0;
    let mut total = 0;
    for (p, &a) in rec.selected.iter().enumerate() {
        let (lo, hi) = (p * 16, p * 16 + 16);
        // Interior of a region: clear of band edges by the largest sweep.
        let region = lo / band;
        if lo < region * band + 24 || hi + 24 > (region + 1) * band || hi / band != region {
            continue;
        }
        let want = [6.0, 0.0, -6.0][region];
        total += 1;
        hits += usize::from(a == want);
    }
    assert!(total >= 6);
    assert!(hits as f64 >= 0.95 * total as f64, "{hits} of {total}: {:?}", rec.selected);
}

#[test]
fn design_windows_cover_the_row() {
    assert_eq!(design_windows(100, 0), vec![(0, 100)]);
    assert_eq!(design_windows(20, 32), vec![(0, 20)]);
    assert_eq!(design_windows(100, 32), vec![(0, 32), (16, 48), (32, 64), (48, 80), (64, 96), (68, 100)]);
    for (cols, tile) in [(384, 32), (97, 40), (256, 64)] {
        let w = design_windows(cols, tile);
        assert_eq!(w[0].0, 0);
        assert_eq!(w.last().unwrap().1, cols);
        assert!(w.iter().all(|&(a, b)| b - a == tile));
        assert!(w.windows(2).all(|p| p[1].0 > p[0].0 && p[1].0 <= p[0].1));
    }
    assert!(ReconConfig { tile: 8, ..Default::default() }.validate().is_err());
}

#[test]
fn windows_see_their_own_disparity() {
    let (lr, _, band) = regions(8, 6, 4);
    let c = reconstruct_single_shear(&lr, 0.0, &ReconConfig::default()).unwrap();
    let whole = reconstruct_single_shear(&lr, 0.0, &ReconConfig { tile: 0, ..Default::default() }).unwrap();
    assert_eq!(whole.tiles.len(), 1);
    let global = whole.tiles[0].residual;
    let mut local = 0;
    for t in &c.tiles {
        if t.coherence < LOCAL_COHERENCE {
            assert_eq!(t.residual, global, "fallback window at {}", t.center);
            assert_eq!(t.levels, whole.tiles[0].levels);
            continue;
        }
        local += 1;
        let region = (t.center / band as f64) as usize;
        let inside = t.center - 16.0 >= (region * band) as f64 && t.center + 16.0 <= ((region + 1) * band) as f64;
        if inside {
            let want = [-6.0, 0.0, 6.0][region];
            let tol = if want == 0.0 { 0.05 } else { 1.25 };
            assert!((t.residual - want).abs() <= tol, "window at {}: {} vs {want}", t.center, t.residual);
        }
    }
    assert!(local >= c.tiles.len() / 2, "{local} of {} windows trusted", c.tiles.len());
}

#[test]
fn local_design_keeps_matched_regions_sharp() {
    // A strong far band drives the whole-row design; the matched band should not pay for it.
    let inputs: Vec<usize> = (0..21).step_by(4).collect();
    let mut best_gain = f64::NEG_INFINITY;
    for seed in 0..4 {
        let (lr, hr, band) = banded(seed, 6, 4, [-4.2, 5.7, -5.0]);
        let cols = |g: &Grid2| g.crop_cols(2 * band + 24, 3 * band - 24);
        let run = |tile: usize| reconstruct_single_shear(&lr, 5.0, &ReconConfig { tile, ..Default::default() }).unwrap();
        let (local, global) = (run(32), run(0));
        let whole_sigma = global.tiles[0].levels[2].spec.sigma;
        for t in local.tiles.iter().filter(|t| t.center > (2 * band + 16) as f64) {
            assert!(t.levels[2].spec.sigma <= whole_sigma + 1e-12, "seed {seed} window {}", t.center);
        }
        let p = |c: &Candidate| psnr_rows(&cols(&c.output.samples), &cols(&hr.samples), &inputs, 1.0).unwrap();
        let gain = p(&local) - p(&global);
        assert!(gain >= -0.01, "seed {seed}: windowed design lost {gain} dB");
        best_gain = best_gain.max(gain);
    }
    assert!(best_gain > 10.0, "best gain {best_gain} dB");
}

#[test]
fn single_candidate_is_single_shear() {
    let (lr, _) = oracle(9, 1.0, 6, 128, 4);
    let cfg = ReconConfig::default().with_shears(vec![-1.0]);
    let multi = reconstruct_multi(&lr, &cfg).unwrap();
    let single = reconstruct_single_shear(&lr, -1.0, &cfg).unwrap();
    assert_eq!(multi.epi, single.output);
    assert!(multi.selected.iter().all(|&a| a == -1.0));
}

#[test]
fn best_shear_handles_fourteen_pixels() {
    // Coarse, sparse texture: after the -9 shear the remaining 5 px per view
    // is within what the capped prefilter can smooth.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts = textured_points(&mut rng, 384, 6, 14.0, (20.0, 40.0), 3.0);
    let (lr, hr) = render_dense_oracle(&pts, 21, 384, 4).unwrap();
    let cfg = ReconConfig::default();
    let fused = reconstruct_multi(&lr, &cfg).unwrap();
    let flat = reconstruct_single_shear(&lr, 0.0, &cfg).unwrap();
    let crop = |g: &Grid2| g.crop_cols(96, 288);
    let inputs: Vec<usize> = (0..hr.angular()).step_by(4).collect();
    let pf = psnr_rows(&crop(&fused.epi.samples), &crop(&hr.samples), &inputs, 1.0).unwrap();
    let p0 = psnr_rows(&crop(&flat.output.samples), &crop(&hr.samples), &inputs, 1.0).unwrap();
    assert!(pf >= p0 + 3.0, "{pf} vs {p0}");
    let interior = &fused.selected[6..18];
    assert!(interior.iter().filter(|&&a| a == -9.0).count() >= 10, "{interior:?}");
}

#[test]
fn global_best_uses_one_shear() {
    let (lr, _, _) = regions(11, 6, 4);
    let cfg = ReconConfig { fusion: Fusion::GlobalBest, ..Default::default() };
    let rec = reconstruct_multi(&lr, &cfg).unwrap();
    assert!(rec.selected.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn fusion_dominates_every_candidate() {
    let (lr, _, _) = regions(12, 6, 4);
    let cfg = ReconConfig::default();
    let rec = reconstruct_multi(&lr, &cfg).unwrap();
    let fused = rec.selected_error(&cfg.shears);
    for (i, e) in rec.errors.iter().enumerate() {
        assert!(fused <= e.iter().sum::<f64>() + 1e-12, "candidate {i}");
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let (lr, _, _) = regions(13, 6, 4);
    let cfg = ReconConfig::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| reconstruct_multi(&lr, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.epi, b.epi);
    assert_eq!(a.selected, b.selected);
}

#[test]
fn single_precision_matches_double() {
    let (lr, _) = oracle(14, 2.0, 6, 128, 4);
    let cfg = ReconConfig::default().with_shears(vec![-3.0, 0.0]);
    let d = reconstruct_multi(&lr, &cfg).unwrap();
    let f = reconstruct_multi(&Epi::synthetic(lr.samples.cast::<f32>()), &cfg).unwrap();
    let diff = d.epi.samples.max_abs_diff(&f.epi.samples.cast::<f64>());
    assert!(diff < 1e-4, "{diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn output_shape_and_inputs(s_lr in 2usize..7, alpha_s in 2usize..5, a in -4.0f64..4.0, seed in any::<u64>()) {
        let (lr, _) = oracle(seed, 1.0, s_lr, 96, alpha_s);
        let cfg = ReconConfig::default().with_alpha_s(alpha_s);
        let c = reconstruct_single_shear(&lr, a, &cfg).unwrap();
        prop_assert_eq!(c.output.samples.shape(), (alpha_s * s_lr - (alpha_s - 1), 96));
        for s in 0..s_lr {
            prop_assert_eq!(c.output.samples.row(s * alpha_s), lr.samples.row(s));
        }
        prop_assert!(c.output.samples.is_finite());
    }
}
