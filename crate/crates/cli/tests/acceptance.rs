//! Acceptance suite: every criterion prints one PASS/FAIL line and the test
//! fails if any criterion does.
//!
//! Run with `cargo test -p ghz-cli --test acceptance -- --nocapture` to see
//! the report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ghz_cli::{run_analyze, run_simulate, Format, RunOverrides};
use ghz_core::channels::ErrorModelParams;
use ghz_core::config::DEFAULT_CYCLE_RATE;
use ghz_core::estimation::{afterpulse_correct, fidelity_report, fit_scaling, FidelityReport, ScalingPoint};
use ghz_core::measurement::{parity_sign, sample_outcome, tabulate, CoincidenceTable, MeasurementSetting, SettingId};
use ghz_core::oracle::{analytic_fidelity, exact_detection, exact_fidelity};
use ghz_core::phase::{beta_phi, PhaseNoiseParams};
use ghz_core::protocol::ideal_state;
use ghz_core::sim::{
    predicted_rate_per_hour, run_campaign, run_settings, simulated_rate_per_hour, Campaign, SamplingMode,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BETA_RES: f64 = 0.966;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn data(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(path)
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// Simulated full-decomposition datasets shared by several criteria.
struct Datasets {
    /// Tables per `m`, eigen first.
    tables: BTreeMap<usize, Vec<CoincidenceTable>>,
    /// Reports of every simulated dataset, for the witness bound.
    reports: Vec<(String, FidelityReport)>,
}

fn scaling_datasets() -> Datasets {
    let mut tables = BTreeMap::new();
    let mut reports = Vec::new();
    for m in 2..=6 {
        let base = Campaign::new(m, 1_000_000, 2024 + m as u64, SettingId::Eigen);
        let t = run_settings(&base, &SettingId::all(m)).unwrap();
        reports.push((format!("default m={m}"), fidelity_report(&t).unwrap()));
        tables.insert(m, t);
    }
    Datasets { tables, reports }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let tables = ["bell/eigen.csv", "bell/mi0.csv", "bell/mi1.csv"].map(data);
    let r = run_analyze(&tables, None, None).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = within(r.f.value, 0.896, 0.005)
        && within(r.f_e.value, 0.954, 0.0005)
        && within(r.correlations[0].value, 0.845, 0.0005)
        && within(r.correlations[1].value, -0.831, 0.0005)
        && elapsed < 1.0;
    Outcome {
        id: 1,
        pass,
        detail: format!(
            "F = {:.4} +- {:.4}, F_e = {:.4}, <M0> = {:+.4}, <M1> = {:+.4}, {:.3} s",
            r.f.value, r.f.error, r.f_e.value, r.correlations[0].value, r.correlations[1].value, elapsed
        ),
    }
}

fn criterion_2() -> Outcome {
    let r = run_analyze(&["single/eigen.csv", "single/mi0.csv"].map(data), None, None).unwrap();
    Outcome {
        id: 2,
        pass: within(r.f.value, 0.978, 0.005) && r.f_e.value == 1.0,
        detail: format!("F = {:.4} (F_e = {}, F_s = {:.4})", r.f.value, r.f_e.value, r.f_s.value),
    }
}

fn criterion_3(d: &Datasets) -> Outcome {
    let phase = PhaseNoiseParams::default();
    let points: Vec<ScalingPoint> = d
        .reports
        .iter()
        .map(|(_, r)| ScalingPoint {
            m: r.m,
            f_e: r.f_e.value,
            f_s: r.f_s.value,
            beta_phi: beta_phi(r.m, &phase).unwrap(),
        })
        .collect();
    let fit = fit_scaling(&points).unwrap();
    let f_e: Vec<String> = points.iter().map(|p| format!("{:.4}", p.f_e)).collect();
    Outcome {
        id: 3,
        pass: (0.95..=0.965).contains(&fit.alpha),
        detail: format!(
            "alpha = {:.4} (F_e m=2..6: {}), beta_res = {:.4}",
            fit.alpha,
            f_e.join(", "),
            fit.beta_res
        ),
    }
}

fn criterion_4(d: &Datasets) -> Outcome {
    let eigen = &d.tables[&2][0];
    let n = eigen.coincidences() as f64;
    let label = |l: &str| (0..4).find(|&b| eigen.outcome_label(b) == l).unwrap();
    let el = eigen.count(label("EL")) as f64 / n;
    let le = eigen.count(label("LE")) as f64 / n;
    Outcome {
        id: 4,
        pass: el > le && within(el + le, 0.045, 0.01),
        detail: format!("P(EL) = {:.4}, P(LE) = {:.4}, sum = {:.4}", el, le, el + le),
    }
}

fn criterion_5() -> Outcome {
    let params = ErrorModelParams::default();
    let phase = PhaseNoiseParams::default();
    let f2 = exact_fidelity(2, &params, &phase, BETA_RES).unwrap().f;
    let f3 = exact_fidelity(3, &params, &phase, BETA_RES).unwrap().f;
    let f6 = analytic_fidelity(6, &params, &phase, BETA_RES).unwrap().f;
    Outcome {
        id: 5,
        pass: within(f2, 0.896, 0.01) && within(f3, 0.829, 0.02) && within(f6, 0.618, 0.02),
        detail: format!("F(2) = {f2:.4}, F(3) = {f3:.4}, analytic F(6) = {f6:.4}"),
    }
}

fn criterion_6() -> Outcome {
    let params = ErrorModelParams::default();
    let phase = PhaseNoiseParams::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in 1..=3 {
        for setting in SettingId::all(m) {
            let c = Campaign::new(m, 1_000_000, 77, setting);
            let table = run_campaign(&c).unwrap();
            let basis = vec![setting.setting(m).unwrap(); m];
            let exact = exact_detection(m, &params, &phase, &basis).unwrap().conditional();
            let n = table.coincidences() as f64;
            for (o, &p) in exact.iter().enumerate() {
                let freq = table.count(o as u32) as f64 / n;
                let se = (p * (1.0 - p) / n).sqrt();
                worst = worst.max((freq - p).abs() / se);
                checked += 1;
            }
        }
    }
    Outcome {
        id: 6,
        pass: worst <= 3.0,
        detail: format!("{checked} outcome frequencies, largest deviation {worst:.2} standard errors"),
    }
}

fn criterion_7(reports: &mut Vec<(String, FidelityReport)>) -> Outcome {
    let phase = PhaseNoiseParams::default();
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for m in 1..=6 {
        let base = Campaign {
            params: ErrorModelParams::ideal(),
            mode: SamplingMode::Direct,
            ..Campaign::new(m, 400_000, 700 + m as u64, SettingId::Eigen)
        };
        let tables = run_settings(&base, &SettingId::all(m)).unwrap();
        let r = fidelity_report(&tables).unwrap();
        let sr = (phase.sigma_inter_rad(), phase.sigma_laser_rad());
        let expected = (-((m * m) as f64 * sr.0 * sr.0 + m as f64 * sr.1 * sr.1) / 2.0).exp();
        let ratio = r.f_s.value / r.f_e.value;
        worst = worst.max((ratio - expected).abs());
        ratios.push(format!("{ratio:.4}/{expected:.4}"));
        reports.push((format!("phase-only m={m}"), r));
    }
    Outcome {
        id: 7,
        pass: worst <= 0.005,
        detail: format!("F_s/F_e vs law, m=1..6: {}; max deviation {worst:.4}", ratios.join(" ")),
    }
}

fn criterion_8(reports: &[(String, FidelityReport)]) -> Outcome {
    let violations: Vec<String> = reports
        .iter()
        .filter(|(_, r)| {
            let sigma = r.f_e.error.hypot(r.f_s.error);
            r.f_s.value > r.f_e.value + 3.0 * sigma
        })
        .map(|(name, _)| name.clone())
        .collect();
    Outcome {
        id: 8,
        pass: violations.is_empty(),
        detail: format!("{} datasets checked, violations: {:?}", reports.len(), violations),
    }
}

fn criterion_9(d: &Datasets) -> Outcome {
    let predicted = predicted_rate_per_hour(6, &ErrorModelParams::default(), DEFAULT_CYCLE_RATE);
    let simulated = simulated_rate_per_hour(&d.tables[&6][0], DEFAULT_CYCLE_RATE);
    Outcome {
        id: 9,
        // 16.6 is quoted to one decimal from the rounded efficiency 0.094.
        pass: within(predicted, 16.6, 0.1) && within(predicted / 17.2, 1.0, 0.1),
        detail: format!(
            "predicted {predicted:.2}/h ({:+.1}% vs 17.2/h); simulated heralded eigen table {simulated:.2}/h",
            100.0 * (predicted / 17.2 - 1.0)
        ),
    }
}

fn criterion_10(d: &Datasets) -> Outcome {
    let tables = &d.tables[&6];
    let p = ErrorModelParams::default().p_afterpulse;
    let raw = fidelity_report(tables).unwrap();
    let corrected: Vec<CoincidenceTable> = tables.iter().map(|t| afterpulse_correct(t, p)).collect();
    let fixed = fidelity_report(&corrected).unwrap();
    let delta = fixed.f.value - raw.f.value;
    Outcome {
        id: 10,
        pass: within(delta, 0.010, 0.005),
        detail: format!(
            "raw F = {:.4}, corrected F = {:.4}, delta = {delta:+.4}",
            raw.f.value, fixed.f.value
        ),
    }
}

fn criterion_11() -> Outcome {
    let n = 20_000;
    let params = ErrorModelParams::ideal();
    let mut worst_sampled = 0.0f64;
    let mut worst_exact = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in 1..=6 {
        let state = ideal_state(m).unwrap();
        for k in 0..16 {
            let theta = std::f64::consts::PI * k as f64 / 16.0;
            let basis = vec![MeasurementSetting::superposition(theta).unwrap(); m];
            let expected = (m as f64 * theta).cos();
            let exact = ghz_core::measurement::outcome_distribution(&state, &basis)
                .unwrap()
                .parity();
            worst_exact = worst_exact.max((exact - expected).abs());
            let samples = (0..n).map(|_| sample_outcome(&state, &basis, &params, &mut rng).unwrap());
            let table = tabulate(m, SettingId::Mi(0), samples).unwrap();
            let mean: f64 = (0..1u32 << m)
                .map(|o| parity_sign(o) * table.count(o) as f64)
                .sum::<f64>()
                / n as f64;
            let se = ((1.0 - expected * expected) / n as f64).sqrt().max(1.0 / n as f64);
            worst_sampled = worst_sampled.max((mean - expected).abs() / se);
        }
    }
    Outcome {
        id: 11,
        pass: worst_exact < 1e-12 && worst_sampled <= 3.0,
        detail: format!(
            "m=1..6 x 16 angles: exact max |dev| = {worst_exact:.1e}, sampled max deviation {worst_sampled:.2} standard errors"
        ),
    }
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let overrides = RunOverrides {
        m: Some(3),
        trajectories: Some(100_000),
        seed: Some(42),
        ..RunOverrides::default()
    };
    let mut outputs = Vec::new();
    for (run, threads) in [(0, 1), (1, 1), (2, 4)] {
        let out = dir.path().join(format!("run{run}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let summary = run_simulate(&overrides, &out, Format::Csv).unwrap();
            let tables: Vec<PathBuf> = summary.tables.iter().map(|t| out.join(&t.file)).collect();
            run_analyze(&tables, Some(0.001), Some(&out.join("report"))).unwrap();
        });
        let mut files = read_dir_bytes(&out);
        files.extend(
            read_dir_bytes(&out.join("report"))
                .into_iter()
                .map(|(k, v)| (format!("report/{k}"), v)),
        );
        outputs.push(files);
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    Outcome {
        id: 12,
        pass: identical && outputs[0].len() >= 7,
        detail: format!("{} files compared across 3 runs (1, 1, 4 threads)", outputs[0].len()),
    }
}

#[test]
fn acceptance_criteria() {
    let start = Instant::now();
    let mut data = scaling_datasets();
    let mut outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(&data),
        criterion_4(&data),
        criterion_5(),
        criterion_6(),
    ];
    outcomes.push(criterion_7(&mut data.reports));
    outcomes.push(criterion_8(&data.reports));
    outcomes.push(criterion_9(&data));
    outcomes.push(criterion_10(&data));
    outcomes.push(criterion_11());
    outcomes.push(criterion_12());
    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        println!(
            "criterion {:>2}: {}  {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance suite finished in {:.1} s", start.elapsed().as_secs_f64());
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
