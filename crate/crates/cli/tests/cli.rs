use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lfaa_cli::cli::{EXIT_NUMERICAL, EXIT_VALIDATION, THREADS_ENV};
use lfaa_core::container::read_light_field;
use tempfile::TempDir;

fn lfaa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfaa"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove(THREADS_ENV)
        .output()
        .expect("run lfaa")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn path(dir: &Path, p: &str) -> String {
    dir.join(p).to_string_lossy().into_owned()
}

#[test]
fn synth_then_reconstruct_keeps_input_views() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(lfaa(dir, &["synth", "--preset", "fig2", "--out", "fig2"]));
    let input = path(dir, "fig2");
    ok(lfaa(dir, &["reconstruct", "--in", &input, "--out", "rec", "--alpha-s", "4"]));
    let sparse = read_light_field(&dir.join("fig2")).unwrap();
    let dense = read_light_field(&dir.join("rec")).unwrap();
    assert_eq!(dense.views_s(), 4 * (sparse.views_s() - 1) + 1);
    for s in 0..sparse.views_s() {
        assert_eq!(dense.view(4 * s, 0), sparse.view(s, 0), "input view {s}");
    }
}

#[test]
fn train_and_infer() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = dir.join("train.json");
    fs::write(&cfg, r#"{"train":{"steps":3},"data":{"regular_count":4}}"#).unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    ok(lfaa(dir, &["--seed", "3", "train", "--config", &cfg, "--out", "ck.json"]));
    let trace = fs::read_to_string(dir.join("train_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert!(trace.starts_with("step,phase,loss\n0,regular,"));

    ok(lfaa(dir, &["synth", "--preset", "fig2", "--out", "fig2"]));
    let (ck, input) = (path(dir, "ck.json"), path(dir, "fig2"));
    ok(lfaa(dir, &["infer", "--ckpt", &ck, "--in", &input, "--out", "inf"]));
    let out = read_light_field(&dir.join("inf")).unwrap();
    assert_eq!(out.views_s(), 25);
    assert!(out.view(12, 0).as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn eval_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(lfaa(dir, &["synth", "--suite", "lambertian", "--out", "lam"]));
    let index = dir.join("lam/index.json");
    let mut cases: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(&index).unwrap()).unwrap();
    cases.truncate(2);
    fs::write(&index, serde_json::to_string(&cases).unwrap()).unwrap();

    let data = path(dir, "lam");
    for out in ["a.csv", "b.csv"] {
        ok(lfaa(dir, &["eval", "--dataset", &data, "--no-timing", "--out", out]));
    }
    let a = fs::read(dir.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,pipeline,alpha_s,psnr_mean,ssim_mean,runtime_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.ends_with(",0.000")));
}

#[test]
fn empty_dataset_gives_header_only() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::create_dir(dir.join("empty")).unwrap();
    fs::write(dir.join("empty/index.json"), "[]").unwrap();
    let data = path(dir, "empty");
    ok(lfaa(dir, &["eval", "--dataset", &data, "--no-timing", "--out", "e.csv"]));
    assert_eq!(
        fs::read_to_string(dir.join("e.csv")).unwrap(),
        "case,pipeline,alpha_s,psnr_mean,ssim_mean,runtime_ms\n"
    );
}

#[test]
fn validation_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&lfaa(dir, &["bogus"])), EXIT_VALIDATION as i32);
    assert_eq!(code(&lfaa(dir, &["--threads", "0", "curve"])), EXIT_VALIDATION as i32);
    let missing = path(dir, "nothing-here");
    assert_eq!(code(&lfaa(dir, &["reconstruct", "--in", &missing, "--out", "r"])), EXIT_VALIDATION as i32);
    ok(lfaa(dir, &["synth", "--preset", "fig2", "--out", "fig2"]));
    let input = path(dir, "fig2");
    let bad_alpha = lfaa(dir, &["reconstruct", "--in", &input, "--out", "r", "--alpha-s", "1"]);
    assert_eq!(code(&bad_alpha), EXIT_VALIDATION as i32);
    let no_ckpt = lfaa(dir, &["eval", "--suite", "lambertian", "--pipeline", "danet"]);
    assert_eq!(code(&no_ckpt), EXIT_VALIDATION as i32);
}

#[test]
fn numerical_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = dir.join("diverge.json");
    fs::write(
        &cfg,
        r#"{"train":{"steps":5,"lr_rest":1e12,"lr_prefilter":1e12},"data":{"regular_count":4}}"#,
    )
    .unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let o = lfaa(dir, &["train", "--config", &cfg, "--out", "ck.json"]);
    assert_eq!(code(&o), EXIT_NUMERICAL as i32);
    assert!(dir.join("train_trace.csv").exists(), "trace is kept on failure");
    assert!(!dir.join("ck.json").exists());

    let reference = dir.join("ref.csv");
    fs::write(&reference, "gamma,alpha_u,sigma\n5,1,0.1\n").unwrap();
    let reference = reference.to_string_lossy().into_owned();
    assert_eq!(code(&lfaa(dir, &["curve", "--check", &reference])), EXIT_NUMERICAL as i32);
}

#[test]
fn thread_count_from_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_lfaa"))
            .arg("--out-dir")
            .arg(dir)
            .args(["curve", "--out", "c.csv"])
            .env(THREADS_ENV, v)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("0")), EXIT_VALIDATION as i32);
    ok(run("2"));
    let flag = Command::new(env!("CARGO_BIN_EXE_lfaa"))
        .arg("--out-dir")
        .arg(dir)
        .args(["--threads", "1", "curve", "--out", "c.csv"])
        .env(THREADS_ENV, "0")
        .output()
        .unwrap();
    assert_eq!(code(&flag), 0, "the flag takes precedence");
}

#[test]
fn curve_matches_shipped_reference() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let reference = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sigma_curve.csv");
    ok(lfaa(dir, &["curve", "--check", reference]));
    assert_eq!(fs::read_to_string(dir.join("sigma_curve.csv")).unwrap(), fs::read_to_string(reference).unwrap());
}
