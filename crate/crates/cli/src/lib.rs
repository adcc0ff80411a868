//! Commands behind the `ghzsim` binary.
//!
//! Each `run_*` function takes parsed options, writes its artifacts and
//! returns a summary for the caller to print. Errors carry the process exit
//! code: 2 for configuration problems (including unwritable outputs), 3 for
//! unreadable or inconsistent data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ghz_core::config::SimConfig;
use ghz_core::estimation::{
    afterpulse_correct, fidelity_report, fit_scaling, phase_calibration, FidelityReport, PhaseCalibration, ScalingFit,
    ScalingPoint,
};
use ghz_core::measurement::{format_outcome, parity_sign, CoincidenceTable, SettingId};
use ghz_core::oracle::{
    analytic_fidelity, exact_detection, exact_distribution, exact_fidelity, ExactFidelity, MAX_EXACT_M,
};
use ghz_core::phase::beta_phi;
use ghz_core::sim::{
    predicted_rate_per_hour, run_campaign, simulate_phase_sweep, simulated_rate_per_hour, SamplingMode,
};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration or unwritable output (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Unreadable or inconsistent input data (exit code 3).
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (csv | json)")),
        }
    }
}

/// Overrides applied on top of the configuration file (or the defaults).
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub config: Option<PathBuf>,
    pub m: Option<usize>,
    pub trajectories: Option<u64>,
    pub seed: Option<u64>,
    pub settings: Vec<SettingId>,
    pub mode: Option<SamplingMode>,
}

impl RunOverrides {
    pub fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text =
                    fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                SimConfig::from_toml(&text).map_err(config_err)?
            }
            None => SimConfig::default(),
        };
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(n) = self.trajectories {
            cfg.trajectories = n;
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if !self.settings.is_empty() {
            cfg.settings = self.settings.clone();
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable summary");
    s.push('\n');
    s
}

/// File stem for a setting: `eigen`, `mi0`, `mi1`, ...
pub fn setting_stem(setting: SettingId) -> String {
    match setting {
        SettingId::Eigen => "eigen".into(),
        SettingId::Mi(i) => format!("mi{i}"),
    }
}

/// Reads a table, choosing the parser from the file extension.
pub fn read_table(path: &Path) -> Result<CoincidenceTable> {
    let text = fs::read_to_string(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        CoincidenceTable::from_json(&text)
    } else {
        CoincidenceTable::from_csv(&text)
    };
    parsed.map_err(|e| data_err(format!("{}: {e}", path.display())))
}

pub fn write_table(table: &CoincidenceTable, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    write_file(path, &text)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableSummary {
    pub setting: SettingId,
    pub file: String,
    pub coincidences: u64,
    pub total_cycles: u64,
    pub simulated_rate_per_hour: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub m: usize,
    pub trajectories: u64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub cycle_rate: f64,
    pub predicted_rate_per_hour: f64,
    pub tables: Vec<TableSummary>,
}

impl SimulateSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "m = {}, {} trajectories per setting, seed {}",
            self.m, self.trajectories, self.seed
        )
        .unwrap();
        writeln!(
            s,
            "predicted {}-fold rate: {:.2} / hour",
            self.m, self.predicted_rate_per_hour
        )
        .unwrap();
        for t in &self.tables {
            writeln!(
                s,
                "  {:<6} {:>10} coincidences  {:>14} cycles  {:.2} / hour  -> {}",
                t.setting.to_string(),
                t.coincidences,
                t.total_cycles,
                t.simulated_rate_per_hour,
                t.file
            )
            .unwrap();
        }
        s
    }
}

/// Simulates one table per requested setting and writes them with a
/// `summary.json` rate summary and the effective `config.toml`.
pub fn run_simulate(overrides: &RunOverrides, out_dir: &Path, format: Format) -> Result<SimulateSummary> {
    let cfg = overrides.resolve()?;
    create_out_dir(out_dir)?;
    let mut tables = Vec::new();
    for setting in cfg.settings() {
        let table = run_campaign(&cfg.campaign(setting)).map_err(config_err)?;
        let file = format!("{}.{}", setting_stem(setting), format.extension());
        write_table(&table, &out_dir.join(&file), format)?;
        tables.push(TableSummary {
            setting,
            file,
            coincidences: table.coincidences(),
            total_cycles: table.total_cycles,
            simulated_rate_per_hour: simulated_rate_per_hour(&table, cfg.cycle_rate),
        });
    }
    let summary = SimulateSummary {
        m: cfg.m,
        trajectories: cfg.trajectories,
        seed: cfg.master_seed,
        mode: cfg.mode,
        cycle_rate: cfg.cycle_rate,
        predicted_rate_per_hour: predicted_rate_per_hour(cfg.m, &cfg.params, cfg.cycle_rate),
        tables,
    };
    write_file(&out_dir.join("summary.json"), &to_json(&summary))?;
    write_file(&out_dir.join("config.toml"), &cfg.to_toml())?;
    Ok(summary)
}

/// Fidelity report from one eigen and `m` superposition tables. With
/// `afterpulse`, the expected afterpulse coincidences are subtracted first.
/// Writes `report.json` and `report.txt` when `out_dir` is given.
pub fn run_analyze(tables: &[PathBuf], afterpulse: Option<f64>, out_dir: Option<&Path>) -> Result<FidelityReport> {
    if let Some(p) = afterpulse {
        if !(0.0..=1.0).contains(&p) {
            return Err(config_err(format!("afterpulse probability {p} outside [0, 1]")));
        }
    }
    let mut loaded = tables.iter().map(|p| read_table(p)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = afterpulse {
        loaded = loaded.iter().map(|t| afterpulse_correct(t, p)).collect();
    }
    let report = fidelity_report(&loaded).map_err(data_err)?;
    if let Some(dir) = out_dir {
        create_out_dir(dir)?;
        write_file(&dir.join("report.json"), &report.to_json())?;
        write_file(&dir.join("report.txt"), &report.to_text())?;
    }
    Ok(report)
}

/// Fits the scaling law to reports for several `m`. The visibility factor
/// of each point comes from the phase-noise model of `config`.
pub fn run_fit(reports: &[PathBuf], config: Option<&Path>, out: Option<&Path>) -> Result<ScalingFit> {
    if reports.len() < 2 {
        return Err(data_err(format!(
            "scaling fit needs at least two reports, got {}",
            reports.len()
        )));
    }
    let cfg = RunOverrides {
        config: config.map(Path::to_path_buf),
        ..RunOverrides::default()
    }
    .resolve()?;
    let mut points = Vec::with_capacity(reports.len());
    for path in reports {
        let text = fs::read_to_string(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
        let report = FidelityReport::from_json(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        points.push(ScalingPoint {
            m: report.m,
            f_e: report.f_e.value,
            f_s: report.f_s.value,
            beta_phi: beta_phi(report.m, &cfg.phase).map_err(data_err)?,
        });
    }
    let fit = fit_scaling(&points).map_err(data_err)?;
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_out_dir(dir)?;
        }
        write_file(path, &to_json(&fit))?;
    }
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Set phase, radians.
    pub phase: f64,
    pub coincidences: u64,
    /// Fraction of even-parity outcomes.
    pub even_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub m: usize,
    /// Offset used by the simulation, radians.
    pub true_offset: f64,
    pub calibration: PhaseCalibration,
    pub sweep: Vec<SweepPoint>,
}

/// Simulates an angle-0 phase sweep over `points` equally spaced set phases
/// with a hidden offset and fits the internal phase. Writes
/// `calibration.json` and the plot data `sweep.csv`.
pub fn run_calibrate(
    overrides: &RunOverrides,
    points: usize,
    offset_deg: f64,
    out_dir: &Path,
) -> Result<CalibrationSummary> {
    let cfg = overrides.resolve()?;
    if points < 5 {
        return Err(config_err(format!("phase sweep needs >= 5 points, got {points}")));
    }
    if !offset_deg.is_finite() {
        return Err(config_err("offset must be finite"));
    }
    create_out_dir(out_dir)?;
    let phases: Vec<f64> = (0..points)
        .map(|k| std::f64::consts::TAU * k as f64 / points as f64)
        .collect();
    let true_offset = offset_deg.to_radians();
    let sweep = simulate_phase_sweep(&cfg.campaign(SettingId::Mi(0)), &phases, true_offset).map_err(config_err)?;
    let calibration = phase_calibration(&sweep).map_err(data_err)?;
    let sweep_points = sweep
        .iter()
        .map(|(phase, table)| {
            let p = table.normalized().unwrap_or_default();
            SweepPoint {
                phase: *phase,
                coincidences: table.coincidences(),
                even_fraction: p
                    .iter()
                    .enumerate()
                    .filter(|(o, _)| parity_sign(*o as u32) > 0.0)
                    .map(|(_, p)| p)
                    .sum(),
            }
        })
        .collect();
    let summary = CalibrationSummary {
        m: cfg.m,
        true_offset,
        calibration,
        sweep: sweep_points,
    };
    let mut csv = String::from("phase,coincidences,even_fraction\n");
    for p in &summary.sweep {
        writeln!(csv, "{},{},{}", p.phase, p.coincidences, p.even_fraction).unwrap();
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    write_file(&out_dir.join("calibration.json"), &to_json(&summary))?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub outcome: String,
    /// Probability of the outcome per trajectory before detection.
    pub emitted: f64,
    /// Probability among detected `m`-fold coincidences.
    pub detected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSetting {
    pub setting: SettingId,
    pub partial: f64,
    pub coincidence_probability: f64,
    pub outcomes: Vec<OracleOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub m: usize,
    pub fidelity: ExactFidelity,
    pub settings: Vec<OracleSetting>,
}

/// Exact outcome distributions by enumeration (`m <= 4`). Writes
/// `oracle.json` and, for CSV output, one `oracle_<setting>.csv` each.
pub fn run_oracle(overrides: &RunOverrides, out_dir: Option<&Path>, format: Format) -> Result<OracleSummary> {
    let cfg = overrides.resolve()?;
    if cfg.m > MAX_EXACT_M {
        return Err(config_err(format!("oracle supports m <= {MAX_EXACT_M}, got {}", cfg.m)));
    }
    let fidelity = exact_fidelity(cfg.m, &cfg.params, &cfg.phase, cfg.beta_res).map_err(config_err)?;
    let mut settings = Vec::new();
    for setting in cfg.settings() {
        let basis = vec![setting.setting(cfg.m).map_err(config_err)?; cfg.m];
        let dist = exact_distribution(cfg.m, &cfg.params, &cfg.phase, &basis).map_err(config_err)?;
        let det = exact_detection(cfg.m, &cfg.params, &cfg.phase, &basis).map_err(config_err)?;
        let cond = det.conditional();
        settings.push(OracleSetting {
            setting,
            partial: dist.partial,
            coincidence_probability: det.coincidence_probability(),
            outcomes: (0..1u32 << cfg.m)
                .map(|o| OracleOutcome {
                    outcome: format_outcome(o, cfg.m, setting.kind(), None),
                    emitted: dist.probabilities[o as usize],
                    detected: cond[o as usize],
                })
                .collect(),
        });
    }
    let summary = OracleSummary {
        m: cfg.m,
        fidelity,
        settings,
    };
    if let Some(dir) = out_dir {
        create_out_dir(dir)?;
        write_file(&dir.join("oracle.json"), &to_json(&summary))?;
        if format == Format::Csv {
            for s in &summary.settings {
                let mut csv = String::from("outcome,emitted,detected\n");
                for o in &s.outcomes {
                    writeln!(csv, "{},{},{}", o.outcome, o.emitted, o.detected).unwrap();
                }
                write_file(&dir.join(format!("oracle_{}.csv", setting_stem(s.setting))), &csv)?;
            }
        }
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRow {
    pub m: usize,
    pub beta_phi: f64,
    pub analytic: ExactFidelity,
    /// Enumerated chain, available for small `m`.
    pub exact: Option<ExactFidelity>,
    pub predicted_rate_per_hour: f64,
}

/// Model predictions for `m = 1..=max_m`: fidelity chain, visibility and
/// coincidence rate. Writes `model.json` and the plot data `model.csv`.
pub fn run_report(overrides: &RunOverrides, max_m: usize, out_dir: Option<&Path>) -> Result<Vec<ModelRow>> {
    let cfg = overrides.resolve()?;
    if max_m == 0 || max_m > ghz_core::measurement::MAX_QUBITS {
        return Err(config_err(format!(
            "max m = {max_m} outside [1, {}]",
            ghz_core::measurement::MAX_QUBITS
        )));
    }
    let mut rows = Vec::with_capacity(max_m);
    for m in 1..=max_m {
        let exact = if m <= MAX_EXACT_M {
            Some(exact_fidelity(m, &cfg.params, &cfg.phase, cfg.beta_res).map_err(config_err)?)
        } else {
            None
        };
        rows.push(ModelRow {
            m,
            beta_phi: beta_phi(m, &cfg.phase).map_err(config_err)?,
            analytic: analytic_fidelity(m, &cfg.params, &cfg.phase, cfg.beta_res).map_err(config_err)?,
            exact,
            predicted_rate_per_hour: predicted_rate_per_hour(m, &cfg.params, cfg.cycle_rate),
        });
    }
    if let Some(dir) = out_dir {
        create_out_dir(dir)?;
        write_file(&dir.join("model.json"), &to_json(&rows))?;
        let mut csv = String::from("m,beta_phi,f_e,f_s,f,exact_f_e,exact_f_s,exact_f,rate_per_hour\n");
        for r in &rows {
            let ex = |f: fn(&ExactFidelity) -> f64| r.exact.as_ref().map(|e| f(e).to_string()).unwrap_or_default();
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                r.m,
                r.beta_phi,
                r.analytic.f_e,
                r.analytic.f_s,
                r.analytic.f,
                ex(|e| e.f_e),
                ex(|e| e.f_s),
                ex(|e| e.f),
                r.predicted_rate_per_hour
            )
            .unwrap();
        }
        write_file(&dir.join("model.csv"), &csv)?;
    }
    Ok(rows)
}

pub fn model_text(rows: &[ModelRow]) -> String {
    let mut s = String::from(" m  beta_phi    F_e     F_s     F      rate/h\n");
    for r in rows {
        let f = r.exact.as_ref().unwrap_or(&r.analytic);
        writeln!(
            s,
            "{:>2}  {:.4}   {:.4}  {:.4}  {:.4}  {:>10.2}{}",
            r.m,
            r.beta_phi,
            f.f_e,
            f.f_s,
            f.f,
            r.predicted_rate_per_hour,
            if r.exact.is_some() { "" } else { "  (analytic)" }
        )
        .unwrap();
    }
    s
}
