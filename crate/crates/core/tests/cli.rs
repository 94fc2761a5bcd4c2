mod common;

use std::path::Path;
use std::process::Command;

use microgrid_ems::cli::{self, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;

use common::{check_golden, fixture, read_tree};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["microgrid-ems"];
    argv.extend_from_slice(args);
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn config_path() -> String {
    fixture("microgrid.toml").to_str().unwrap().to_string()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Writes a copy of the shipped configuration with `edit` applied to its text.
fn edited_config(dir: &Path, edit: impl FnOnce(String) -> String) -> String {
    let text = read(&fixture("microgrid.toml")).replace(
        "profile = \"reference_day.csv\"",
        &format!("profile = {:?}", fixture("reference_day.csv").to_str().unwrap()),
    );
    let path = dir.join("edited.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_matches_golden_day() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let (code, stdout, stderr) = run(&["simulate", "--config", &config_path(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stdout.contains("simulated 24 steps"));

    let trace = read(&out.join("trace.csv"));
    assert_eq!(trace.lines().count(), 25);
    check_golden("day_trace.csv", &trace).unwrap();
    check_golden("day_report.json", &read(&out.join("report.json"))).unwrap();

    let report = json(&out.join("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["reliability"]["uptime_fraction"], 1.0);
    assert_eq!(report["horizon_steps"], 24);

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["random_free"], true);
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn trace_columns_sum_to_report_totals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&[
        "scenarios",
        "--config",
        &config_path(),
        "--out",
        out.to_str().unwrap(),
        "--scenarios",
        "S3",
        "--outage-start",
        "16",
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    for run_dir in ["base", "S3"] {
        let dir = out.join(run_dir);
        let report = json(&dir.join("report.json"));
        let dt = report["step_hours"].as_f64().unwrap();
        let mut reader = csv::Reader::from_path(dir.join("trace.csv")).unwrap();
        let headers = reader.headers().unwrap().clone();
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        let sum = |col: &str| -> f64 {
            let i = headers.iter().position(|h| h == col).unwrap();
            rows.iter().map(|r| r[i].parse::<f64>().unwrap() * dt).sum()
        };
        let energy = &report["energy"];
        for (column, total) in [
            ("demand_kw", "demand_kwh"),
            ("grid_import_kw", "imported_kwh"),
            ("grid_export_kw", "exported_kwh"),
            ("dg_kw", "dg_kwh"),
            ("pv_kw", "pv_kwh"),
            ("wind_kw", "wind_kwh"),
            ("curtailed_kw", "curtailed_kwh"),
            ("battery_charge_kw", "battery_charge_kwh"),
            ("battery_discharge_kw", "battery_discharge_kwh"),
            ("unserved_kw", "unserved_kwh"),
        ] {
            let reported = energy[total].as_f64().unwrap();
            assert!((sum(column) - reported).abs() <= 1e-6, "{run_dir} {column}: {} vs {reported}", sum(column));
        }
        let served = sum("demand_kw") - sum("unserved_kw");
        assert!((served - energy["served_kwh"].as_f64().unwrap()).abs() <= 1e-6);
    }
}

#[test]
fn scenario_matrix_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&["scenarios", "--config", &config_path(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let matrix = read(&out.join("matrix.csv"));
    check_golden("matrix.csv", &matrix).unwrap();
    let ids: Vec<&str> = matrix.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["S1", "S2", "S3", "S4"]);
    assert!(matrix.lines().skip(1).all(|l| l.split(',').nth(1) == Some("ok")));
}

#[test]
fn selected_scenarios_produce_three_reports_and_two_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&[
        "scenarios",
        "--config",
        &config_path(),
        "--out",
        out.to_str().unwrap(),
        "--scenarios",
        "S1,S4",
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let reports: Vec<String> = read_tree(&out)
        .into_iter()
        .map(|(p, _)| p.to_str().unwrap().to_string())
        .filter(|p| p.ends_with("report.json"))
        .collect();
    assert_eq!(reports, ["S1/report.json", "S4/report.json", "base/report.json"]);
    assert_eq!(read(&out.join("matrix.csv")).lines().count(), 3);
}

#[test]
fn failing_scenario_is_marked_and_siblings_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let config = edited_config(tmp.path(), |t| t + "\n[scenario.late]\noutage_start = 22\noutage_hours = 6\n");
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&[
        "scenarios",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--scenarios",
        "late,S1",
    ]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(stderr.contains("scenario late failed"), "{stderr}");
    let matrix = read(&out.join("matrix.csv"));
    let late = matrix.lines().find(|l| l.starts_with("late,")).unwrap();
    assert!(late.starts_with("late,error,"), "{late}");
    assert!(late.contains("does not fit"));
    assert!(matrix.lines().any(|l| l.starts_with("S1,ok,")));
    assert!(out.join("S1/report.json").exists());
    assert!(!out.join("late").exists());
}

#[test]
fn validate_prints_resolved_threshold_and_conversion() {
    let (code, stdout, stderr) = run(&["validate", "--config", &config_path()]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stdout.contains("threshold: 0.2628"), "{stdout}");
    assert!(stdout.contains("percentile 0.75 of 24 prices"));
    assert!(stdout.contains("(÷100)"));
    assert!(stdout.contains("horizon: 24 steps"));
}

#[test]
fn validate_reports_one_line_per_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let config = edited_config(tmp.path(), |t| t.replace("soc_min = 0.2", "soc_min = 0.9"));
    let (code, stdout, stderr) = run(&["validate", "--config", &config]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(stdout.is_empty());
    let violations: Vec<&str> = stderr.lines().filter(|l| l.starts_with("battery.")).collect();
    assert_eq!(violations.len(), 1, "{stderr}");
}

#[test]
fn missing_profile_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let missing = tmp.path().join("nowhere.csv");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        &config_path(),
        "--profile",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_IO);
    assert!(stderr.contains("nowhere.csv"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn empty_horizon_is_rejected_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&["simulate", "--config", &config_path(), "--steps", "0", "--out", out.to_str().unwrap()]);
    assert_ne!(code, EXIT_OK);
    assert!(stderr.contains("empty horizon"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn bad_profile_row_reports_line_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = tmp.path().join("bad.csv");
    std::fs::write(&profile, "index,demand_kw,price,grid_available,pv_kw,wind_kw\n0,10,0.1,1,0,0\n1,x,0.1,1,0,0\n").unwrap();
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        &config_path(),
        "--profile",
        profile.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(stderr.contains("line 3"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_a_validation_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let config = edited_config(tmp.path(), |t| t.replace("[grid]", "[grid]\nimport_limit = 3"));
    let (code, _, stderr) = run(&["validate", "--config", &config]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(stderr.contains("import_limit"), "{stderr}");
}

#[test]
fn steps_flag_truncates_and_outputs_stay_in_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("deep/nested/run");
    let (code, _, stderr) = run(&["simulate", "--config", &config_path(), "--steps", "6", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert_eq!(read(&out.join("trace.csv")).lines().count(), 7);
    let top: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, ["deep"]);
    let files: Vec<_> = read_tree(&out).into_iter().map(|(p, _)| p).collect();
    assert_eq!(files.len(), 3);
}

#[test]
fn resource_mode_profile_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = tmp.path().join("weather.csv");
    std::fs::write(
        &profile,
        "index,demand_kw,price,grid_available,irradiance_wm2,wind_speed_ms\n\
         0,100,12,1,0,3\n1,120,9,1,500,8\n2,150,27,1,1000,12\n3,200,28,0,200,30\n",
    )
    .unwrap();
    let out = tmp.path().join("run");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        &config_path(),
        "--profile",
        profile.to_str().unwrap(),
        "--mode",
        "resource",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let mut reader = csv::Reader::from_path(out.join("trace.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    // 1000 W/m² at derating 0.8 on 280 kW; rated wind speed gives 105 kW
    assert_eq!(&rows[2][4], "224");
    assert_eq!(&rows[2][5], "105");
    // above cut-out the turbines stop
    assert_eq!(&rows[3][5], "0");
    assert_eq!(&rows[3][18], "islanded");
}

#[test]
fn flags_override_config_mode() {
    let (code, _, stderr) = run(&["validate", "--config", &config_path(), "--mode", "resource"]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(stderr.contains("header"), "{stderr}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_microgrid-ems");
    let status = Command::new(bin).args(["validate", "--config", &config_path()]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    let status = Command::new(bin).args(["validate", "--config", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_IO));
    assert!(String::from_utf8_lossy(&status.stderr).contains("/nonexistent/config.toml"));
    let status = Command::new(bin).args(["frobnicate"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_VALIDATION));
}
