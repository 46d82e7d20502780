use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use r4_core::io::{format_float, load_csv_matrix};
use r4_core::{multistart_fit, DenseMatrix, OutlierSpec, R4Problem, RegressionData, SolverOptions, ThresholdRule};

fn r4(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r4")).args(args).output().expect("binary runs")
}

fn write_matrix(path: &Path, rows: &[Vec<f64>]) {
    let body: Vec<String> = rows.iter().map(|r| r.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(",")).collect();
    fs::write(path, body.join("\n")).unwrap();
}

/// Deterministic toy data: rank-1 signal plus a few shifted rows.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let (n, p, m) = (30, 3, 3);
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| 2.0 * next()).collect()).collect();
    let y: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let s: f64 = x[i].iter().sum();
            (0..m).map(|k| s * (k as f64 + 1.0) + 0.3 * next() + if i < 2 { 6.0 } else { 0.0 }).collect()
        })
        .collect();
    let (xp, yp) = (dir.join("X.csv"), dir.join("Y.csv"));
    write_matrix(&xp, &x);
    write_matrix(&yp, &y);
    (xp, yp)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bits_equal(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits())
}

#[test]
fn fit_output_reloads_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = fixture(dir.path());
    let out = dir.path().join("fit");
    let res = r4(&["fit", "--x", s(&x), "--y", s(&y), "--rank", "1", "--lambda", "2", "--multistart", "3", "--seed", "4", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let data = RegressionData::new(load_csv_matrix(&x).unwrap(), load_csv_matrix(&y).unwrap(), None).unwrap();
    let problem = R4Problem::new(data, 1, OutlierSpec::PenalizedRowwise(ThresholdRule::hard(2.0))).unwrap();
    let opts = SolverOptions { multistart: 3, seed: 4, ..Default::default() };
    let fit = multistart_fit(&problem, &opts).unwrap();
    assert!(bits_equal(&load_csv_matrix(out.join("B_hat.csv")).unwrap(), &fit.b_hat));
    assert!(bits_equal(&load_csv_matrix(out.join("C_hat.csv")).unwrap(), &fit.c_hat));
    let outliers = fs::read_to_string(out.join("outliers.csv")).unwrap();
    assert!(outliers.starts_with("row,norm\n0,"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["rank"], 1);
    assert!(json["timestamp"].is_u64());
    assert!(json["pic"].is_f64());
}

#[test]
fn identical_seeds_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = fixture(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = r4(&["path", "--x", s(&x), "--y", s(&y), "--ranks", "1..2", "--grid", "15", "--multistart", "2", "--seed", "9", "--no-timestamp", "--out", s(&out)]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "detection_path.csv"));
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
    let det = load_csv_matrix(a.join("detection_path.csv")).unwrap();
    assert_eq!(det.nrows(), 30);
}

#[test]
fn large_threshold_writes_header_only_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = fixture(dir.path());
    let out = dir.path().join("fit");
    let res = r4(&["fit", "--x", s(&x), "--y", s(&y), "--rank", "1", "--lambda", "1e6", "--rule", "soft", "--no-timestamp", "--out", s(&out)]);
    assert!(res.status.success());
    assert_eq!(fs::read_to_string(out.join("outliers.csv")).unwrap(), "row,norm\n");
    let json = fs::read_to_string(out.join("fit.json")).unwrap();
    assert!(!json.contains("timestamp"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = fixture(dir.path());
    let cfg = dir.path().join("job.json");
    fs::write(&cfg, format!(r#"{{"x": "{}", "y": "{}", "rank": 2, "lambda": 3.0, "no_timestamp": true}}"#, s(&x), s(&y))).unwrap();
    let out = dir.path().join("fit");
    let res = r4(&["fit", "--config", s(&cfg), "--rank", "1", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["rank"], 1);
    assert_eq!(json["lambda"], 3.0);
    assert!(json.get("timestamp").is_none());
}

#[test]
fn series_split_reports_forecast_errors() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..25).map(|t| vec![(t as f64 * 0.7).sin(), (t as f64 * 0.3).cos(), 0.1 * t as f64]).collect();
    let series = dir.path().join("S.csv");
    write_matrix(&series, &rows);
    let out = dir.path().join("var");
    let res = r4(&["fit", "--series", s(&series), "--split", "15", "--rank", "1", "--lambda", "5", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("forecast.json")).unwrap()).unwrap();
    assert_eq!(json["train_rows"], 15);
    assert_eq!(json["test_rows"], 9);
    assert!(json["trimmed_mse"].as_f64().unwrap() <= json["mse"].as_f64().unwrap());
    assert_eq!(load_csv_matrix(out.join("forecast.csv")).unwrap().shape(), (9, 3));
}

fn assert_error(res: &Output, code: i32, reason: &str) {
    assert_eq!(res.status.code(), Some(code));
    let err = String::from_utf8_lossy(&res.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{reason}]: ")), "{err}");
}

#[test]
fn errors_map_to_exit_codes_and_reason_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = fixture(dir.path());
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.csv");
    assert_error(&r4(&["fit", "--x", s(&x), "--y", s(&missing), "--rank", "1", "--lambda", "1", "--out", s(&out)]), 4, "io_error");

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_error(&r4(&["fit", "--x", s(&ragged), "--y", s(&y), "--rank", "1", "--lambda", "1", "--out", s(&out)]), 2, "invalid_input");

    assert_error(&r4(&["fit", "--x", s(&x), "--y", s(&y), "--rank", "7", "--lambda", "1", "--out", s(&out)]), 2, "invalid_input");
    assert_error(&r4(&["fit", "--x", s(&x), "--y", s(&y), "--rank", "1", "--out", s(&out)]), 2, "invalid_input");
    assert_error(&r4(&["fit", "--nonsense"]), 2, "invalid_input");
    assert_error(&r4(&["simulate", "--model", "IV", "--out", s(&out)]), 2, "invalid_input");

    let gamma = dir.path().join("G.csv");
    fs::write(&gamma, "1,0,0\n0,-1,0\n0,0,1\n").unwrap();
    assert_error(
        &r4(&["fit", "--x", s(&x), "--y", s(&y), "--gamma", s(&gamma), "--rank", "1", "--lambda", "1", "--out", s(&out)]),
        2,
        "not_positive_definite",
    );
    assert!(!out.exists());
}

#[test]
fn breakdown_and_simulate_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bd");
    let res = r4(&["breakdown", "--magnitudes", "1e2,1e4", "--multistart", "3", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("breakdown.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let out = dir.path().join("sim");
    let res = r4(&["simulate", "--reps", "2", "--grid", "10", "--methods", "R4,RRR", "--multistart", "1", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(out.join("simreport.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("R4,"));
    assert!(report.lines().nth(2).unwrap().starts_with("RRR,"));
    assert!(out.join("simreport.json").exists());
}
