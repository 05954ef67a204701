//! End-to-end runner tests: config validation, output layout, determinism,
//! and the binary's exit codes.

use std::path::Path;
use std::process::Command;

use flatten_cli::{run_with_config, CliError, Config, ExperimentKind, RunOptions};

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

const CANTOR_BASE: &str = "\
schema = 1
ifs.lambdas = 0.3333333333333333, 0.3333333333333333
ifs.translations = 0, 0.6666666666666666
ifs.weights = 0.5, 0.5
";

fn opts(dir: &Path) -> RunOptions {
    RunOptions { out_dir: Some(dir.to_path_buf()), seed: Some(7), timings: false }
}

#[test]
fn tsujii_run_layout_and_rerun_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_text = format!("{CANTOR_BASE}tsujii.r_list = 64, 128\ntsujii.delta = 0.1\n");
    let cfg = Config::parse(&cfg_text).unwrap();
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    run_with_config(ExperimentKind::TsujiiScan, &cfg, &opts(&out1)).unwrap();
    let cfg2 = Config::parse(&cfg_text).unwrap();
    run_with_config(ExperimentKind::TsujiiScan, &cfg2, &opts(&out2)).unwrap();
    let csv1 = std::fs::read(out1.join("tsujii-scan.csv")).unwrap();
    let csv2 = std::fs::read(out2.join("tsujii-scan.csv")).unwrap();
    assert_eq!(csv1, csv2, "rerun changed CSV bytes");
    assert!(out1.join("manifest.txt").exists());
    assert!(out1.join("tsujii_cover.dat").exists());
    let manifest = std::fs::read_to_string(out1.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.tsujii.delta = 0.1"));
    assert!(manifest.contains("fit.cover_exponent"));
}

#[test]
fn missing_weights_is_a_config_error_naming_the_field() {
    let cfg = Config::parse(
        "schema = 1\nifs.lambdas = 0.5, 0.5\nifs.translations = 0, 0.5\n",
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let err = run_with_config(ExperimentKind::TsujiiScan, &cfg, &opts(tmp.path())).unwrap_err();
    match err {
        CliError::Config(e) => assert_eq!(e.path, "ifs.weights"),
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn unknown_key_rejected_before_compute() {
    let cfg =
        Config::parse(&format!("{CANTOR_BASE}tsujii.deltaa = 0.1\n")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let err = run_with_config(ExperimentKind::TsujiiScan, &cfg, &opts(tmp.path())).unwrap_err();
    match err {
        CliError::Config(e) => assert_eq!(e.path, "tsujii.deltaa"),
        other => panic!("expected config error, got {other}"),
    }
}

#[test]
fn lift_verify_manifest_records_zero_defect() {
    let cfg = Config::parse(&format!("{CANTOR_BASE}lift.ell = 3\nlift.depth = 4\n")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let summary =
        run_with_config(ExperimentKind::LiftVerify, &cfg, &opts(tmp.path())).unwrap();
    assert_eq!(summary.manifest.get("lift.exact_defect_zero").map(String::as_str), Some("true"));
    let defect: f64 = summary.manifest["lift.float_defect"].parse().unwrap();
    assert!(defect < 1e-12);
    let orbit: f64 = summary.manifest["lift.orbit_distance"].parse().unwrap();
    assert!(orbit < 1e-10);
    assert!(tmp.path().join("lifted_system.txt").exists());
}

#[test]
fn flattening_and_consistency_emit_plotdata() {
    let cfg = Config::parse(&format!(
        "{CANTOR_BASE}flatten.p_max = 2\nflatten.m_min = 3\nflatten.m_max = 6\n"
    ))
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let summary =
        run_with_config(ExperimentKind::FlatteningReport, &cfg, &opts(tmp.path())).unwrap();
    assert!(tmp.path().join("flattening_p1.dat").exists());
    assert!(tmp.path().join("flattening_p2.dat").exists());
    assert!(summary.manifest.contains_key("dim2.p1"));
    let csv = std::fs::read_to_string(tmp.path().join("flattening-report.csv")).unwrap();
    assert!(csv.starts_with("p,m,s_m,normalized,dim2_fit\n"));
}

#[test]
fn nonconcentration_run_is_seed_deterministic() {
    let body = format!(
        "{CANTOR_BASE}curve.kind = moment\ncurve.dim = 2\n\
         nonconcentration.tau = 0.01\nnonconcentration.trials = 50\n\
         nonconcentration.eps_list = 0.25, 0.125, 0.0625\n"
    );
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    let cfg1 = Config::parse(&body).unwrap();
    run_with_config(ExperimentKind::NonconcentrationSweep, &cfg1, &opts(&out1)).unwrap();
    let cfg2 = Config::parse(&body).unwrap();
    run_with_config(ExperimentKind::NonconcentrationSweep, &cfg2, &opts(&out2)).unwrap();
    assert_eq!(
        std::fs::read(out1.join("nonconcentration-sweep.csv")).unwrap(),
        std::fs::read(out2.join("nonconcentration-sweep.csv")).unwrap()
    );
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_flatten");
    let tmp = tempfile::tempdir().unwrap();
    // config error -> 2
    let bad = write_config(tmp.path(), "schema = 1\n");
    let status = Command::new(bin)
        .args(["tsujii-scan", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("out1"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // success -> 0
    let good = write_config(
        tmp.path(),
        &format!("{CANTOR_BASE}tsujii.r_list = 32\ntsujii.delta = 0.1\n"),
    );
    let status = Command::new(bin)
        .args(["tsujii-scan", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(tmp.path().join("out2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    // budget exceeded -> 3
    let tight = write_config(
        tmp.path(),
        &format!("{CANTOR_BASE}scan.r_list = 64\nscan.p_list = 2\nbudget.grid = 10\n"),
    );
    let status = Command::new(bin)
        .args(["fourier-scan", "--config"])
        .arg(&tight)
        .arg("--out")
        .arg(tmp.path().join("out3"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
