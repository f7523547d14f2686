use std::fs;
use std::path::Path;
use std::process::Command;

use infomax_cli::output::sha256_file;

fn infomax(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_infomax"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("INFOMAX_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn unknown_key_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomax(dir.path(), &["ndm", "--set", "objective.gama=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("objective.gama"), "{err}");
    let line: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(line["exit_code"], 2);
}

#[test]
fn unknown_key_in_file_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[optimizer]\nstep = 3\n").unwrap();
    let out = infomax(dir.path(), &["ndm", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimizer.step"));
}

#[test]
fn bad_value_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomax(dir.path(), &["jsd-kl", "--set", "data.draws=many"]);
    assert_eq!(out.status.code(), Some(2));
    let out = infomax(dir.path(), &["jsd-kl", "--set", "run.dtype=float32"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_mi_summary_carries_analytic_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomax(dir.path(), &["estimate-mi", "--set", "optimizer.steps=5", "--set", "optimizer.batch=16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = rows(&dir.path().join("summary.csv"));
    assert_eq!(summary.len(), 4);
    for (row, expected) in summary.iter().zip([0.0, 0.0472, 0.2231, 0.8304]) {
        let mi: f64 = row[1].parse().unwrap();
        assert!((mi - expected).abs() < 1e-4, "{mi} vs {expected}");
    }
    let curves = rows(&dir.path().join("curves.csv"));
    assert_eq!(curves.len(), 4 * 3 * 5);
}

#[test]
fn jsd_kl_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["jsd-kl", "--seed", "7", "--set", "data.draws=50", "--set", "data.sizes=4,8"];
    assert!(infomax(a.path(), &args).status.success());
    assert!(infomax(b.path(), &args).status.success());
    for name in ["scatter.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(rows(&a.path().join("scatter.csv")).len(), 100);
}

#[test]
fn manifest_checksums_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomax(
        dir.path(),
        &[
            "train-dim",
            "--set",
            "optimizer.steps=3",
            "--set",
            "optimizer.batch=8",
            "--set",
            "eval.probe_train=64",
            "--set",
            "eval.probe_test=32",
            "--set",
            "eval.probe_epochs=2",
            "--set",
            "eval.export_features=true",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "train-dim");
    assert_eq!(m["config"]["optimizer.steps"], "3");
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "checkpoint/manifest.txt"));
    for f in files {
        let (bytes, sha) = sha256_file(&dir.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"], bytes);
        assert_eq!(f["sha256"], sha);
    }
    assert_eq!(rows(&dir.path().join("metrics.csv")).len(), 3);
}

#[test]
fn exported_features_feed_the_probe_and_ndm_commands() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    let out = infomax(
        &train,
        &[
            "train-dim",
            "--set",
            "optimizer.steps=2",
            "--set",
            "optimizer.batch=8",
            "--set",
            "eval.probes=none",
            "--set",
            "eval.probe_train=64",
            "--set",
            "eval.probe_test=32",
            "--set",
            "eval.export_features=true",
            "--set",
            "eval.checkpoint=false",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!train.join("probes.csv").exists());
    let cfg = dir.path().join("probe.ini");
    fs::write(
        &cfg,
        "[data]\nfeatures = train/features_train.dimt\nlabels = train/labels_train.csv\n\
         test_features = train/features_test.dimt\ntest_labels = train/labels_test.csv\n\
         [eval]\nprobe_epochs = 2\nndm_steps = 5\n",
    )
    .unwrap();
    let probe = dir.path().join("probe");
    let out = infomax(&probe, &["probe", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let acc: f64 = rows(&probe.join("probe.csv"))[0][1].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(rows(&probe.join("probe_curve.csv")).len(), 2);

    let ndm = dir.path().join("ndm");
    let out = infomax(&ndm, &["ndm", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&ndm.join("ndm.csv"))[0][0], "features_train");
}

#[test]
fn missing_probe_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomax(dir.path(), &["probe"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.features"));
}
