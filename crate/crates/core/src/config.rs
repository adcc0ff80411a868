//! Simulation configuration.
//!
//! ```toml
//! [run]
//! m = 6
//! trajectories = 1000000
//! seed = 1
//! settings = ["eigen", "mi:0"]   # empty or absent: all m + 1 settings
//! mode = "heralded"               # or "direct"
//! cycle_rate = 6666.67            # cycles per second
//!
//! [errors]
//! p_patch_fail = 0.02
//!
//! [phase]
//! sigma_laser = 13.0              # degrees
//! ```
//!
//! Every key is optional; missing keys take the calibrated defaults.

use serde::{Deserialize, Serialize};

use crate::channels::{CoincidenceFilter, ErrorModelParams};
use crate::error::{Error, Result};
use crate::measurement::{SettingId, MAX_QUBITS};
use crate::phase::PhaseNoiseParams;
use crate::sim::{Campaign, SamplingMode};

/// 1000 generation cycles per 150 ms (120 ms loading + 30 ms generation).
pub const DEFAULT_CYCLE_RATE: f64 = 1000.0 / 0.15;

/// Residual per-photon factor used by the fidelity model chain.
pub const DEFAULT_BETA_RES: f64 = 0.966;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    pub trajectories: u64,
    pub master_seed: u64,
    /// Settings to simulate; empty means all `m + 1`.
    pub settings: Vec<SettingId>,
    pub mode: SamplingMode,
    pub filter: CoincidenceFilter,
    pub cycle_rate: f64,
    pub beta_res: f64,
    pub params: ErrorModelParams,
    pub phase: PhaseNoiseParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            m: 2,
            trajectories: 1_000_000,
            master_seed: 1,
            settings: Vec::new(),
            mode: SamplingMode::Heralded,
            filter: CoincidenceFilter::FullOrMissingOne,
            cycle_rate: DEFAULT_CYCLE_RATE,
            beta_res: DEFAULT_BETA_RES,
            params: ErrorModelParams::default(),
            phase: PhaseNoiseParams::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    errors: ErrorModelParams,
    #[serde(default)]
    phase: PhaseNoiseParams,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSection {
    m: usize,
    trajectories: u64,
    seed: u64,
    settings: Vec<SettingId>,
    mode: SamplingMode,
    filter: CoincidenceFilter,
    cycle_rate: f64,
    beta_res: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        let d = SimConfig::default();
        RunSection {
            m: d.m,
            trajectories: d.trajectories,
            seed: d.master_seed,
            settings: d.settings,
            mode: d.mode,
            filter: d.filter,
            cycle_rate: d.cycle_rate,
            beta_res: d.beta_res,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = SimConfig {
            m: file.run.m,
            trajectories: file.run.trajectories,
            master_seed: file.run.seed,
            settings: file.run.settings,
            mode: file.run.mode,
            filter: file.run.filter,
            cycle_rate: file.run.cycle_rate,
            beta_res: file.run.beta_res,
            params: file.errors,
            phase: file.phase,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            run: RunSection {
                m: self.m,
                trajectories: self.trajectories,
                seed: self.master_seed,
                settings: self.settings.clone(),
                mode: self.mode,
                filter: self.filter,
                cycle_rate: self.cycle_rate,
                beta_res: self.beta_res,
            },
            errors: self.params,
            phase: self.phase,
        };
        toml::to_string(&file).expect("config serialization")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m == 0 || self.m > MAX_QUBITS {
            return fail(format!("m = {} outside [1, {MAX_QUBITS}]", self.m));
        }
        if self.trajectories == 0 {
            return fail("trajectories must be positive".into());
        }
        if !(self.cycle_rate > 0.0 && self.cycle_rate.is_finite()) {
            return fail(format!("cycle_rate = {} must be positive", self.cycle_rate));
        }
        if !(self.beta_res > 0.0 && self.beta_res <= 1.0) {
            return fail(format!("beta_res = {} outside (0, 1]", self.beta_res));
        }
        for s in &self.settings {
            if let SettingId::Mi(i) = s {
                if *i >= self.m {
                    return fail(format!("setting {s} out of range for m = {}", self.m));
                }
            }
        }
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.phase.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Requested settings, defaulting to the full decomposition.
    pub fn settings(&self) -> Vec<SettingId> {
        if self.settings.is_empty() {
            SettingId::all(self.m)
        } else {
            self.settings.clone()
        }
    }

    pub fn campaign(&self, setting: SettingId) -> Campaign {
        Campaign {
            m: self.m,
            trajectories: self.trajectories,
            master_seed: self.master_seed,
            setting,
            params: self.params,
            phase: self.phase,
            mode: self.mode,
            filter: self.filter,
            phase_shift: 0.0,
            tag: 0,
        }
    }
}
