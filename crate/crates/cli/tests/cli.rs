use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ghz_cli::{run_analyze, run_calibrate, run_fit, run_oracle, run_simulate, CliError, Format, RunOverrides};
use ghz_core::measurement::SettingId;
use ghz_core::sim::SamplingMode;

fn data(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(path)
}

fn ghzsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ghzsim")).args(args).output().unwrap()
}

#[test]
fn analyze_measured_bell_tables() {
    let tables = ["bell/eigen.csv", "bell/mi0.csv", "bell/mi1.csv"].map(data);
    let dir = tempfile::tempdir().unwrap();
    let report = run_analyze(&tables, None, Some(dir.path())).unwrap();
    assert!((report.f.value - 0.896).abs() < 0.003);
    assert!(dir.path().join("report.json").exists());
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("F   = 89.6"), "{text}");
}

#[test]
fn analyze_missing_settings_is_data_error() {
    let err = run_analyze(&[data("bell/eigen.csv")], None, None).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    assert!(err.to_string().contains("mi:0"));
    let out = ghzsim(&["analyze", data("bell/eigen.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_then_analyze_ideal_source() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ideal.toml");
    fs::write(
        &cfg,
        "[run]\nm = 3\nmode = \"direct\"\n[errors]\np_patch_fail = 0.0\np_unexp_rv1 = 0.0\np_unexp_rv2 = 0.0\np_accum = 0.0\n\
         eta_f = 1.0\neta_t = 1.0\neta_d = 1.0\np_dark = 0.0\np_afterpulse = 0.0\n[phase]\nsigma_laser = 0.0\nsigma_inter = 0.0\n",
    )
    .unwrap();
    let overrides = RunOverrides {
        config: Some(cfg),
        trajectories: Some(20_000),
        ..RunOverrides::default()
    };
    let out = dir.path().join("tables");
    let summary = run_simulate(&overrides, &out, Format::Json).unwrap();
    assert_eq!(summary.tables.len(), 4);
    let files: Vec<PathBuf> = summary.tables.iter().map(|t| out.join(&t.file)).collect();
    let report = run_analyze(&files, None, None).unwrap();
    assert_eq!(report.f.value, 1.0);
}

#[test]
fn simulate_writes_requested_settings() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = RunOverrides {
        m: Some(2),
        trajectories: Some(5_000),
        settings: vec![SettingId::Mi(1)],
        mode: Some(SamplingMode::Direct),
        ..RunOverrides::default()
    };
    let summary = run_simulate(&overrides, dir.path(), Format::Csv).unwrap();
    assert_eq!(summary.tables[0].file, "mi1.csv");
    assert_eq!(summary.tables[0].total_cycles, 5_000);
    let table = fs::read_to_string(dir.path().join("mi1.csv")).unwrap();
    assert!(table.contains("# setting = mi:1"));
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let out = ghzsim(&["simulate", "--trajectories", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[run]\nm = 40\n").unwrap();
    let out = ghzsim(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = ghzsim(&["simulate", "--config", "/nonexistent/x.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let overrides = RunOverrides {
        m: Some(1),
        trajectories: Some(10),
        ..RunOverrides::default()
    };
    let err = run_simulate(&overrides, &blocker.join("sub"), Format::Csv).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn fit_needs_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    run_analyze(
        &["bell/eigen.csv", "bell/mi0.csv", "bell/mi1.csv"].map(data),
        None,
        Some(dir.path()),
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let err = run_fit(std::slice::from_ref(&report), None, None).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    let out = ghzsim(&["fit", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fit_recovers_geometric_reports() {
    let dir = tempfile::tempdir().unwrap();
    let phase = ghz_core::phase::PhaseNoiseParams::default();
    let mut paths = Vec::new();
    for m in 2..=5 {
        let f_e = 0.96f64.powi(m as i32 - 1);
        let f_s = f_e * ghz_core::phase::beta_phi(m, &phase).unwrap() * 0.97f64.powi(m as i32);
        let report = ghz_core::estimation::FidelityReport {
            m,
            f_e: ghz_core::estimation::Measured::exact(f_e),
            correlations: Vec::new(),
            f_s: ghz_core::estimation::Measured::exact(f_s),
            f: ghz_core::estimation::Measured::exact(0.5 * (f_e + f_s)),
            corrected: false,
        };
        let path = dir.path().join(format!("m{m}.json"));
        fs::write(&path, report.to_json()).unwrap();
        paths.push(path);
    }
    let out = dir.path().join("fit/fit.json");
    let fit = run_fit(&paths, None, Some(&out)).unwrap();
    assert!((fit.alpha - 0.96).abs() < 1e-12);
    assert!((fit.beta_res - 0.97).abs() < 1e-12);
    assert!(out.exists());
}

#[test]
fn calibrate_finds_offset() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = RunOverrides {
        m: Some(2),
        trajectories: Some(40_000),
        ..RunOverrides::default()
    };
    let s = run_calibrate(&overrides, 12, -50.0, dir.path()).unwrap();
    let err = (s.calibration.phi0 - s.true_offset).to_degrees();
    assert!(err.abs() < 4.0 * s.calibration.phi0_error.to_degrees() + 0.5, "{err}");
    assert_eq!(s.sweep.len(), 12);
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = RunOverrides {
        m: Some(2),
        ..RunOverrides::default()
    };
    let s = run_oracle(&overrides, Some(dir.path()), Format::Csv).unwrap();
    assert_eq!(s.settings.len(), 3);
    for set in &s.settings {
        let emitted: f64 = set.outcomes.iter().map(|o| o.emitted).sum();
        let detected: f64 = set.outcomes.iter().map(|o| o.detected).sum();
        assert!((emitted + set.partial - 1.0).abs() < 1e-9);
        assert!((detected - 1.0).abs() < 1e-9);
    }
    assert!(dir.path().join("oracle_mi1.csv").exists());
    let too_big = RunOverrides {
        m: Some(5),
        ..RunOverrides::default()
    };
    assert_eq!(run_oracle(&too_big, None, Format::Json).unwrap_err().exit_code(), 2);
}

#[test]
fn binary_report_runs() {
    let out = ghzsim(&["report", "--max-m", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
}
