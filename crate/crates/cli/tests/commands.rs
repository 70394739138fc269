use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fsdc::cli::report::{BaselineOutcome, BenchReport, RunReport};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn fsdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsdc")).args(args).output().unwrap()
}

fn train(out: &Path, extra: &[&str]) -> Output {
    let config = data("toy.toml");
    let mut args = vec!["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fsdc(&args)
}

fn report(dir: &Path) -> RunReport {
    RunReport::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn toy_train_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), &["--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("model.json").is_file());
    assert!(dir.path().join("report.txt").is_file());
    let r = report(dir.path());
    assert_eq!(r.data.n_train + r.data.n_test, 200);
    let m = r.metrics.unwrap();
    assert!((0.0..=100.0).contains(&m.error_rate));
    assert!(m.error_rate < 30.0, "toy error {}", m.error_rate);
    assert_eq!(r.artifacts.len(), 2);
    assert!(r.artifacts.iter().all(|a| a.sha256.len() == 64));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Error Rate(%)"));
}

#[test]
fn timings_sum_to_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), &[]).status.success());
    let t = report(dir.path()).timings;
    let stages = [t.parse, t.scaling, t.decomposition, t.apply, t.local_training, t.fusion, t.prediction, t.write];
    assert!(stages.iter().all(|&s| s >= 0.0));
    let sum = t.stage_sum();
    assert!(
        (sum - t.total_wall).abs() <= 0.05 * t.total_wall,
        "stages {sum} vs wall {}",
        t.total_wall
    );
}

#[test]
fn reruns_reproduce_scores_and_seed_override_is_recorded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(train(a.path(), &["--threads", "1"]).status.success());
    assert!(train(b.path(), &["--threads", "3"]).status.success());
    let (ra, rb) = (report(a.path()), report(b.path()));
    assert_eq!(ra.scores_sha256, rb.scores_sha256);
    assert_eq!(ra.metrics, rb.metrics);

    let c = tempfile::tempdir().unwrap();
    assert!(train(c.path(), &["--seed", "99"]).status.success());
    let rc = report(c.path());
    assert_eq!(rc.seed, 99);
    assert_eq!(rc.config.unwrap().seed, 99);
}

#[test]
fn echoed_config_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    assert!(train(a.path(), &[]).status.success());
    let first = report(a.path());
    let mut echo = first.config.clone().unwrap();
    let b = tempfile::tempdir().unwrap();
    echo.output.dir = b.path().to_path_buf();
    let cfg_path = b.path().join("echo.toml");
    std::fs::write(&cfg_path, echo.to_toml()).unwrap();
    let out = fsdc(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(b.path()).scores_sha256, first.scores_sha256);
}

#[test]
fn eval_prints_two_decimal_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), &[]).status.success());
    let model = dir.path().join("model.json");
    let out = fsdc(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--test",
        data("toy.libsvm").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("Error Rate(%)")).unwrap();
    let value = line.split_whitespace().last().unwrap();
    assert_eq!(value.split('.').nth(1).unwrap().len(), 2, "{line}");
    let stored = RunReport::from_json(&std::fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(format!("{:.2}", stored.metrics.unwrap().error_rate), value);
}

#[test]
fn eval_refuses_other_model_versions() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), &[]).status.success());
    let model = dir.path().join("model.json");
    let text = std::fs::read_to_string(&model).unwrap();
    std::fs::write(&model, text.replacen("\"version\": 1", "\"version\": 7", 1)).unwrap();
    let out = fsdc(&["eval", "--model", model.to_str().unwrap(), "--test", data("toy.libsvm").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version mismatch"));
}

#[test]
fn config_errors_exit_2_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("toy.toml")).unwrap()
        .replace("n_subspaces = 3", "n_subspaces = 0")
        .replace("train_fraction = 0.75", "train_fraction = 0.0");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = fsdc(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_subspaces") && stderr.contains("train_fraction"), "{stderr}");

    let typo = std::fs::read_to_string(data("toy.toml")).unwrap().replace("order = 2", "ordr = 2");
    std::fs::write(&cfg, typo).unwrap();
    assert_eq!(fsdc(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn malformed_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.libsvm"), "+1 1:0.5 3:1\n-1 2:x\n").unwrap();
    let cfg = dir.path().join("toy.toml");
    std::fs::copy(data("toy.toml"), &cfg).unwrap();
    let out = fsdc(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn dense_guard_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("toy.toml")).unwrap().replace("method = \"rd\"", "method = \"pca\"")
        + "\n[guards]\nmax_dense_features = 5\n";
    let text = text.replace("train_path = \"toy.libsvm\"", &format!("train_path = {:?}", data("toy.libsvm")));
    let cfg = dir.path().join("guard.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = fsdc(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("use RD or ABD"));
}

#[test]
fn bench_reports_baseline_and_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("toy.toml");
    let out = fsdc(&["bench", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b: BenchReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    let BaselineOutcome::Ran { metrics, .. } = b.baseline else { panic!("baseline skipped") };
    if metrics.error_rate > 0.0 {
        let expected = 100.0 * (metrics.error_rate - b.dc.error_rate) / metrics.error_rate;
        assert!((b.reduction_percent.unwrap() - expected).abs() < 1e-9);
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("error reduction"));
}

#[test]
fn bench_skips_infeasible_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("toy.toml")).unwrap()
        .replace("[baseline]\nkind = \"linear\"", "[baseline]\nkind = \"trbf\"\norder = 4")
        + "\n[guards]\nmax_intrinsic_dim = 200\n";
    let text = text.replace("train_path = \"toy.libsvm\"", &format!("train_path = {:?}", data("toy.libsvm")));
    let cfg = dir.path().join("skip.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = fsdc(&["bench", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b: BenchReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert!(matches!(b.baseline, BaselineOutcome::Skipped { .. }));
    assert_eq!(b.reduction_percent, None);
}

#[test]
fn inspect_dumps_spectra_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("toy.toml")).unwrap().replace(
        "[local]",
        "[[plan]]\nmethod = \"pca\"\nn_subspaces = 2\ngroup_size = 5\n\n[[plan]]\nmethod = \"bcd\"\nn_subspaces = 2\ngroup_size = 5\n\n[local]",
    );
    let text = text.replace("train_path = \"toy.libsvm\"", &format!("train_path = {:?}", data("toy.libsvm")));
    let cfg = dir.path().join("inspect.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = fsdc(&["inspect", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("inspect.json")).unwrap()).unwrap();
    let parts = json["parts"].as_array().unwrap();
    assert_eq!(parts.len(), 3);
    assert!(parts[0]["block_residual"].is_null());
    for p in &parts[1..] {
        assert!(p["block_residual"].as_f64().unwrap() < 1e-10);
        assert_eq!(p["spectrum"].as_array().unwrap().len(), if p["method"] == "pca" { 10 } else { 2 });
    }
}
