use std::path::Path;
use std::process::{Command, Output};

use qdepth::experiments::{median, offline_vs_incremental};
use qdepth::io::read_path;
use qdepth_core::synth::ar_covariance;
use qdepth_core::{score_detections, GaussianModel};

fn qdepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdepth")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = qdepth(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn gen_writes_declared_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&["gen", "--seed", "4", "--covariance", "pair", "--length", "2000", "--out", path_str(p)]);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("n,x1,x2"));
    assert_eq!(text.lines().count(), 2001);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn gen_dynamic_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    ok(&["gen", "--kind", "dynamic-gaussian", "--period", "1000", "--length", "100000", "--out", path_str(&p)]);
    let t = read_path(&p).unwrap();
    assert_eq!((t.dim, t.len()), (2, 100_000));
}

#[test]
fn estimate_reports_every_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let contours = dir.path().join("contours.csv");
    ok(&["gen", "--seed", "1", "--length", "5000", "--out", path_str(&data)]);
    let out = ok(&[
        "estimate",
        "--seed",
        "1",
        "--input",
        path_str(&data),
        "--method",
        "offline",
        "--n-u",
        "40",
        "--contours",
        path_str(&contours),
    ]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0][..5], ["method", "n", "alpha", "made", "ed"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4][2], "all");
    let made: f64 = rows[4][3].parse().unwrap();
    let ed: f64 = rows[4][4].parse().unwrap();
    assert!(made < 0.05 && ed < 0.3, "{made} {ed}");
    let polylines = std::fs::read_to_string(&contours).unwrap();
    assert_eq!(polylines.lines().count(), 1 + 3 * 360);
}

#[test]
fn estimate_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    std::fs::write(&p, "n,x1,x2\n").unwrap();
    let out = qdepth(&["estimate", "--input", path_str(&p)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no usable rows"));
}

#[test]
fn lognormal_ed_is_refused_with_a_reason() {
    let out = qdepth(&["estimate", "--kind", "static-lognormal", "--length", "500"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("only available for Gaussian"));
    ok(&["estimate", "--kind", "static-lognormal", "--length", "2000", "--no-ed", "--n-v", "200"]);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\n[stream]\nlength = 300\ndim = 3\n").unwrap();
    let out = ok(&["--config", path_str(&cfg), "gen", "--length", "120"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("n,x1,x2,x3"));
    assert_eq!(text.lines().count(), 121);
    std::fs::write(&cfg, "[stream]\nlenght = 3\n").unwrap();
    assert!(!qdepth(&["--config", path_str(&cfg), "gen"]).status.success());
}

#[test]
fn track_single_lambda_and_grid() {
    let out = ok(&["track", "--period", "200", "--n-u", "8", "--lambdas", "0.02", "--n-v", "100"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0], ["n", "made"]);
    // 9 periods after burn-in, 20 checkpoints each
    assert_eq!(rows.len() - 1, 180);
    let out = ok(&["track", "--period", "200", "--n-u", "8", "--lambdas", "0.01,0.03", "--seeds", "2", "--n-v", "100"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("best lambda"));
}

#[test]
fn bench_small_grid() {
    let out = ok(&["bench", "--dims", "2", "--n-u", "8,12", "--target", "0.1", "--cap", "20000"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "p");
    for r in &rows[1..] {
        assert_eq!(r[4], "true");
        let rate: f64 = r[9].parse().unwrap();
        assert!(rate > 0.0);
    }
}

#[test]
fn detect_report_matches_direct_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("regimes.csv");
    let events = dir.path().join("events.csv");
    let report = dir.path().join("report.csv");
    ok(&["gen", "--kind", "regimes", "--seed", "2", "--out", path_str(&data)]);
    ok(&["detect", "--input", path_str(&data), "--events", path_str(&events), "--report", path_str(&report)]);
    let table = read_path(&data).unwrap();
    assert_eq!(table.change_points(), (1..8).map(|k| k * 2000 + 1).collect::<Vec<u64>>());
    let times: Vec<u64> = csv_rows(&std::fs::read_to_string(&events).unwrap())[1..]
        .iter()
        .map(|r| r[0].parse().unwrap())
        .collect();
    let want = score_detections(&times, &table.change_points(), None);
    let rows = csv_rows(&std::fs::read_to_string(&report).unwrap());
    let f1: f64 = rows[1][2].parse().unwrap();
    let precision: f64 = rows[1][0].parse().unwrap();
    assert_eq!((precision, f1), (want.precision, want.f1));
    assert_eq!(rows[1][6], "7");
}

#[test]
fn detect_accepts_accelerometer_logs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("raw.txt");
    let mut text = String::new();
    for i in 0..3000 {
        let (act, x) = if i < 1500 { ("Walking", (i % 7) as f64 * 0.3) } else { ("Jogging", 4.0 + (i % 5) as f64) };
        text.push_str(&format!("7,{act},{},{x},{},{};\n", i * 50, (i % 3) as f64, (i % 11) as f64 * 0.1));
    }
    std::fs::write(&p, text).unwrap();
    let out = ok(&["detect", "--input", path_str(&p)]);
    let report = String::from_utf8(out.stderr).unwrap();
    let rows = csv_rows(report.trim());
    assert_eq!(rows[1][6], "1");
    assert_eq!(rows[1][7], "3000");
}

#[test]
fn offline_and_incremental_at_small_samples() {
    let model = GaussianModel::new(vec![0.0, 0.0], ar_covariance(2, 0.2).unwrap()).unwrap();
    let runs: Vec<_> = (0..20)
        .map(|s| offline_vs_incremental(&model, 500, 1500, &[0.05, 0.2, 0.4], s).unwrap())
        .collect();
    let offline = median(&runs.iter().map(|r| r.offline * 1e3).collect::<Vec<_>>());
    let ratio = median(&runs.iter().map(|r| r.incremental / r.offline).collect::<Vec<_>>());
    assert!((14.9 * 0.7..=14.9 * 1.3).contains(&offline), "offline MADE·10³ {offline}");
    assert!((1.0..=3.0).contains(&ratio), "ratio {ratio}");
}
