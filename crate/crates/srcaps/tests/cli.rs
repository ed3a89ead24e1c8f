//! End-to-end tests of the command-line interface: exit codes, artifacts
//! and output contracts.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::temp_dir;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srcaps::data::save_image;
use srcaps::metrics;
use srcaps::tensor::{Shape4, Tensor4};

fn srcaps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcaps"))
        .args(args)
        .output()
        .expect("failed to spawn srcaps")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn write_dataset(dir: &Path, count: usize, hw: usize, seed: u64) {
    let hr = dir.join("HR");
    std::fs::create_dir_all(&hr).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let img = Tensor4::<f64>::rand_uniform(Shape4::new(1, 3, hw, hw), 0.0, 255.0, &mut rng)
            .map(|v| v.round());
        save_image(&img, &hr.join(format!("img{i}.png"))).unwrap();
    }
}

#[test]
fn help_documents_the_flag_surface() {
    for (cmd, flags) in [
        ("train", vec!["--config", "--seed", "--epochs", "--scale", "--loss", "--dataset", "--out", "--deterministic"]),
        ("eval", vec!["--config", "--baseline", "--dataset", "--out", "--scale"]),
        ("upscale", vec!["--checkpoint", "--baseline", "--out"]),
        ("compare", vec!["--out"]),
    ] {
        let out = srcaps(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help missing {flag}");
        }
    }
}

#[test]
fn train_missing_dataset_exits_2_naming_the_path() {
    let dir = temp_dir("cli-missing");
    let out = srcaps(&[
        "train",
        "--dataset",
        "/nonexistent/datasets",
        "--out",
        dir.join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/datasets"));
}

#[test]
fn unknown_config_keys_exit_2_listing_them_all() {
    let dir = temp_dir("cli-badcfg");
    std::fs::write(dir.join("cfg"), "model.bogus = 1\nother.bad = 2\n").unwrap();
    let out = srcaps(&[
        "train",
        "--config",
        dir.join("cfg").to_str().unwrap(),
        "--out",
        dir.join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("model.bogus") && err.contains("other.bad"));
}

/// One tiny end-to-end pass: train one epoch, then reuse the checkpoint for
/// upscaling twice (deterministically).
#[test]
fn train_smoke_writes_artifacts_and_checkpoint_upscales_deterministically() {
    let dir = temp_dir("cli-smoke");
    write_dataset(&dir.join("ds/train"), 3, 16, 1);
    std::fs::write(
        dir.join("cfg"),
        "model.blocks = 1\nmodel.layers = 1\nmodel.caps = 2\nmodel.filters = 8\ntrain.batch = 2\ntrain.patch_size = 16\ndata.val_split = none\n",
    )
    .unwrap();
    let run = dir.join("run");
    let out = srcaps(&[
        "train",
        "--config",
        dir.join("cfg").to_str().unwrap(),
        "--dataset",
        dir.join("ds").to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--epochs",
        "1",
        "--seed",
        "9",
        "--loss",
        "l1",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(run.join("config.resolved").is_file());
    assert!(run.join("last.ckpt").is_file());
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,step,lr,train_loss"));
    assert!(history.lines().count() >= 2, "history has data rows");

    // the resolved config reflects the overrides
    let resolved = std::fs::read_to_string(run.join("config.resolved")).unwrap();
    assert!(resolved.contains("train.epochs = 1"));
    assert!(resolved.contains("seed = 9"));

    // upscale the same input twice with the trained checkpoint
    let input = dir.join("in.png");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = Tensor4::<f64>::rand_uniform(Shape4::new(1, 3, 12, 12), 0.0, 255.0, &mut rng)
        .map(|v| v.round());
    save_image(&img, &input).unwrap();
    for out_dir in ["up_a", "up_b"] {
        let out = srcaps(&[
            "upscale",
            "--checkpoint",
            run.join("last.ckpt").to_str().unwrap(),
            "--out",
            dir.join(out_dir).to_str().unwrap(),
            input.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let a = std::fs::read(dir.join("up_a/in_x4.png")).unwrap();
    let b = std::fs::read(dir.join("up_b/in_x4.png")).unwrap();
    assert_eq!(a, b, "model upscaling must be deterministic");

    // shape contract: x4 of 12x12 is 48x48
    let sr: Tensor4<f64> = srcaps::data::load_image(&dir.join("up_a/in_x4.png")).unwrap();
    assert_eq!(sr.shape(), Shape4::new(1, 3, 48, 48));
}

#[test]
fn upscale_bicubic_constant_stays_constant_and_scales_shapes() {
    let dir = temp_dir("cli-upscale");
    let input = dir.join("flat.png");
    save_image(&Tensor4::<f64>::full(Shape4::new(1, 3, 32, 32), 120.0), &input).unwrap();
    let out = srcaps(&[
        "upscale",
        "--baseline",
        "bicubic",
        "--scale",
        "4",
        "--out",
        dir.join("out").to_str().unwrap(),
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let sr: Tensor4<f64> = srcaps::data::load_image(&dir.join("out/flat_x4.png")).unwrap();
    assert_eq!(sr.shape(), Shape4::new(1, 3, 128, 128));
    assert!(sr.iter().all(|&v| v == 120.0));
}

#[test]
fn upscale_keeps_going_after_per_file_errors_and_exits_1() {
    let dir = temp_dir("cli-partial");
    let good = dir.join("good.png");
    save_image(&Tensor4::<f64>::full(Shape4::new(1, 3, 8, 8), 50.0), &good).unwrap();
    let out = srcaps(&[
        "upscale",
        "--baseline",
        "bicubic",
        "--scale",
        "2",
        "--out",
        dir.join("out").to_str().unwrap(),
        dir.join("missing.png").to_str().unwrap(),
        good.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing.png"));
    assert!(dir.join("out/good_x2.png").is_file());
}

#[test]
fn eval_bicubic_reports_one_row_per_image() {
    let dir = temp_dir("cli-eval");
    write_dataset(&dir.join("set"), 3, 24, 2);
    let out = srcaps(&[
        "eval",
        "--baseline",
        "bicubic",
        "--scale",
        "4",
        "--dataset",
        dir.join("set").to_str().unwrap(),
        "--out",
        dir.join("report").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("images = 3"));
    let csv = std::fs::read_to_string(dir.join("report/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus one row per image");
    assert!(csv.starts_with("image,psnr,ssim,ms_ssim,psnr3,ssim3"));
}

#[test]
fn eval_empty_dataset_exits_2() {
    let dir = temp_dir("cli-empty");
    std::fs::create_dir_all(dir.join("set/HR")).unwrap();
    let out = srcaps(&[
        "eval",
        "--baseline",
        "bicubic",
        "--dataset",
        dir.join("set").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_requires_a_source() {
    let dir = temp_dir("cli-nosource");
    write_dataset(&dir.join("set"), 1, 16, 3);
    let out = srcaps(&["eval", "--dataset", dir.join("set").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--checkpoint") && stderr(&out).contains("--baseline"));
}

#[test]
fn compare_identical_dirs_gives_inf_psnr_and_unit_ssim() {
    let dir = temp_dir("cli-compare-id");
    let a = dir.join("a");
    std::fs::create_dir_all(&a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..2 {
        let img = Tensor4::<f64>::rand_uniform(Shape4::new(1, 3, 24, 24), 0.0, 255.0, &mut rng)
            .map(|v| v.round());
        save_image(&img, &a.join(format!("x{i}.png"))).unwrap();
    }
    let out = srcaps(&[
        "compare",
        a.to_str().unwrap(),
        a.to_str().unwrap(),
        "--out",
        dir.join("rep").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.join("rep/report.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "inf", "psnr column");
        assert_eq!(cols[2], "1", "ssim column");
    }
}

#[test]
fn compare_matches_library_metric_values() {
    let dir = temp_dir("cli-compare-vals");
    let (a, b) = (dir.join("a"), dir.join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hr = Tensor4::<f64>::rand_uniform(Shape4::new(1, 3, 24, 24), 0.0, 255.0, &mut rng)
        .map(|v| v.round());
    let sr = hr.map(|v| (v + 10.0).min(255.0));
    save_image(&sr, &a.join("img.png")).unwrap();
    save_image(&hr, &b.join("img.png")).unwrap();
    let out = srcaps(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let expected = metrics::psnr(&sr, &hr).unwrap();
    let got: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("mean_psnr = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn compare_disjoint_name_sets_exits_2_with_the_difference() {
    let dir = temp_dir("cli-compare-disjoint");
    let (a, b) = (dir.join("a"), dir.join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let img = Tensor4::<f64>::full(Shape4::new(1, 3, 16, 16), 10.0);
    save_image(&img, &a.join("only_a.png")).unwrap();
    save_image(&img, &b.join("only_b.png")).unwrap();
    let out = srcaps(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("only_a.png") && err.contains("only_b.png"));
}
