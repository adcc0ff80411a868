//! Trajectory campaigns.
//!
//! Each trajectory draws its error events and phase offset, runs the
//! protocol, resolves which component emits (see [`resolve_emitter`]) and
//! is measured in one setting. Two samplers share this path:
//!
//! * `Direct` passes every trajectory through the detection chain, one
//!   experimental cycle per trajectory.
//! * `Heralded` conditions detection on the coincidence filter and weights
//!   each photon record by its pass probability relative to an ideal
//!   single-photon record. The table then stands for
//!   `trajectories / P_ref` cycles. This keeps six-photon statistics
//!   affordable when the coincidence probability is below 1e-6 per cycle.
//!
//! Trajectory `k` of setting `s` always uses the random stream `k` of a
//! generator keyed by `(master_seed, s, tag)`, and chunks are merged in
//! order, so results do not depend on the thread count.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{
    apply_accumulation, error_free_probabilities, sample_final_failure, sample_iteration_events, CoincidenceFilter,
    ConditionedDetector, ErrorModelParams, PreparedRecord, Spd, WindowPhotons,
};
use crate::error::{invalid_arg, Result};
use crate::measurement::{sample_outcome, sample_photons, CoincidenceTable, MeasurementSetting, SettingId, MAX_QUBITS};
use crate::phase::{sample_phase_offset, PhaseNoiseParams};
use crate::protocol::{coherent_state, prepare_initial, TimeBinSymbol, TwoBranchState};

const CHUNK: u64 = 8192;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Direct,
    #[default]
    Heralded,
}

impl std::str::FromStr for SamplingMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SamplingMode::Direct),
            "heralded" => Ok(SamplingMode::Heralded),
            _ => Err(invalid_arg(format!("unknown sampling mode '{s}' (direct | heralded)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub m: usize,
    pub trajectories: u64,
    pub master_seed: u64,
    pub setting: SettingId,
    pub params: ErrorModelParams,
    pub phase: PhaseNoiseParams,
    pub mode: SamplingMode,
    pub filter: CoincidenceFilter,
    /// Deterministic phase added to every trajectory, radians.
    pub phase_shift: f64,
    /// Extra seed component separating otherwise identical campaigns.
    pub tag: u64,
}

impl Campaign {
    pub fn new(m: usize, trajectories: u64, master_seed: u64, setting: SettingId) -> Self {
        Campaign {
            m,
            trajectories,
            master_seed,
            setting,
            params: ErrorModelParams::default(),
            phase: PhaseNoiseParams::default(),
            mode: SamplingMode::default(),
            filter: CoincidenceFilter::FullOrMissingOne,
            phase_shift: 0.0,
            tag: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_QUBITS {
            return Err(invalid_arg(format!("m = {} outside [1, {MAX_QUBITS}]", self.m)));
        }
        if self.trajectories == 0 {
            return Err(invalid_arg("trajectories must be positive"));
        }
        self.params.validate()?;
        self.phase.validate()?;
        self.setting.setting(self.m)?;
        Ok(())
    }

    fn stream_key(&self) -> u64 {
        splitmix64(splitmix64(self.master_seed) ^ splitmix64(self.setting.code() ^ (self.tag << 20)))
    }
}

/// SplitMix64 finaliser, used to derive independent generator keys.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs the protocol for one trajectory: `m - 1` iterations with sampled
/// failures and accumulated components, the final retrieval, and the
/// relative phase (noise plus `phase_shift`).
pub fn sample_trajectory<R: Rng + ?Sized>(
    m: usize,
    params: &ErrorModelParams,
    phase: &PhaseNoiseParams,
    phase_shift: f64,
    rng: &mut R,
) -> Result<TwoBranchState> {
    let mut state = prepare_initial(m)?;
    for _ in 1..m {
        let events = sample_iteration_events(params, rng);
        state.iterate(&events)?;
        if events.accum_triggered() {
            state = apply_accumulation(&state, &events);
        }
    }
    state.finish(sample_final_failure(params, rng))?;
    state.relative_phase = phase_shift + sample_phase_offset(m, phase, rng)?;
    Ok(state)
}

/// Picks the emitting component of a sampled trajectory.
///
/// Failures split each branch coherently, so the error-free parts of both
/// branches form one superposition with amplitudes proportional to
/// `sqrt(P_a)` and `sqrt(P_b)` (see [`error_free_probabilities`]), while
/// erroneous parts carry unrelated phases. Choosing a branch by weight and,
/// if it is error-free, emitting from that superposition reproduces this
/// mixture exactly.
pub fn resolve_emitter<R: Rng + ?Sized>(
    state: &TwoBranchState,
    error_free: (f64, f64),
    rng: &mut R,
) -> Result<TwoBranchState> {
    let m = state.m_target();
    let wa = state.branch_a.amplitude.powi(2);
    let wb = state.branch_b.amplitude.powi(2);
    let pick_a = rng.random::<f64>() * (wa + wb) < wa;
    let (branch, good) = if pick_a {
        (&state.branch_a, Some(TimeBinSymbol::E))
    } else {
        (&state.branch_b, Some(TimeBinSymbol::L))
    };
    let pattern = branch.pattern()?;
    let is_good = !branch.dead && pattern.symbols().iter().all(|&s| Some(s) == good);
    let (pa, pb) = error_free;
    if is_good && pa + pb > 0.0 {
        let mut coherent = coherent_state(m, (pa / (pa + pb)).sqrt(), (pb / (pa + pb)).sqrt())?;
        coherent.relative_phase = state.relative_phase;
        return Ok(coherent);
    }
    let mut single = state.clone();
    if pick_a {
        single.branch_a.amplitude = 1.0;
        single.branch_b.amplitude = 0.0;
    } else {
        single.branch_a.amplitude = 0.0;
        single.branch_b.amplitude = 1.0;
    }
    Ok(single)
}

/// Samples the history of one trajectory and resolves its emitter.
pub fn sample_emission<R: Rng + ?Sized>(
    m: usize,
    params: &ErrorModelParams,
    phase: &PhaseNoiseParams,
    phase_shift: f64,
    rng: &mut R,
) -> Result<TwoBranchState> {
    let history = sample_trajectory(m, params, phase, phase_shift, rng)?;
    resolve_emitter(&history, error_free_probabilities(m, params), rng)
}

/// Simulates one campaign and returns its coincidence table.
pub fn run_campaign(c: &Campaign) -> Result<CoincidenceTable> {
    c.validate()?;
    let settings = vec![c.setting.setting(c.m)?; c.m];
    let key = c.stream_key();
    let chunks = c.trajectories.div_ceil(CHUNK);
    let reference = reference_probability(c);
    let tables: Vec<Result<CoincidenceTable>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * CHUNK;
            let end = (start + CHUNK).min(c.trajectories);
            run_chunk(c, &settings, key, start..end, reference)
        })
        .collect();
    let mut total = CoincidenceTable::new(c.m, c.setting)?;
    for t in tables {
        total.merge(&t?)?;
    }
    if c.mode == SamplingMode::Heralded {
        total.total_cycles = (c.trajectories as f64 / reference).round() as u64;
    }
    Ok(total)
}

/// Filter pass probability of an ideal record (one photon per window, all
/// on SPD1), the normalisation of heralded weights.
fn reference_probability(c: &Campaign) -> f64 {
    let photons = vec![WindowPhotons::single(Spd::One); c.m];
    ConditionedDetector::new(&c.params, c.filter)
        .prepare(&photons)
        .probability
}

fn run_chunk(
    c: &Campaign,
    settings: &[MeasurementSetting],
    key: u64,
    range: std::ops::Range<u64>,
    reference: f64,
) -> Result<CoincidenceTable> {
    let mut table = CoincidenceTable::new(c.m, c.setting)?;
    let detector = ConditionedDetector::new(&c.params, c.filter);
    let mut cache: HashMap<Vec<WindowPhotons>, PreparedRecord> = HashMap::new();
    let error_free = error_free_probabilities(c.m, &c.params);
    for k in range {
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(k);
        let history = sample_trajectory(c.m, &c.params, &c.phase, c.phase_shift, &mut rng)?;
        let state = resolve_emitter(&history, error_free, &mut rng)?;
        match c.mode {
            SamplingMode::Direct => {
                table.record(sample_outcome(&state, settings, &c.params, &mut rng)?);
                table.total_cycles += 1;
            }
            SamplingMode::Heralded => {
                let photons = sample_photons(&state, settings, &mut rng)?;
                let prepared = cache.entry(photons).or_insert_with_key(|p| detector.prepare(p));
                if prepared.probability <= 0.0 {
                    continue;
                }
                let w = prepared.probability / reference;
                let copies = w.floor() as u64 + rng.random_bool(w.fract()) as u64;
                for _ in 0..copies {
                    table.record(detector.sample(prepared, &mut rng));
                }
            }
        }
    }
    Ok(table)
}

/// Runs one campaign per setting with a shared configuration.
pub fn run_settings(base: &Campaign, settings: &[SettingId]) -> Result<Vec<CoincidenceTable>> {
    settings
        .iter()
        .map(|&s| {
            run_campaign(&Campaign {
                setting: s,
                ..base.clone()
            })
        })
        .collect()
}

/// Angle-0 tables at each set phase; the trajectory phase is
/// `phi_set - true_offset` plus noise.
pub fn simulate_phase_sweep(
    base: &Campaign,
    set_phases: &[f64],
    true_offset: f64,
) -> Result<Vec<(f64, CoincidenceTable)>> {
    set_phases
        .iter()
        .enumerate()
        .map(|(k, &phi)| {
            let c = Campaign {
                setting: SettingId::Mi(0),
                phase_shift: phi - true_offset,
                tag: base.tag + k as u64 + 1,
                ..base.clone()
            };
            Ok((phi, run_campaign(&c)?))
        })
        .collect()
}

/// Expected `m`-fold coincidences per hour from the single-photon detection
/// probability alone: `cycle_rate * 3600 * eta^m`.
pub fn predicted_rate_per_hour(m: usize, params: &ErrorModelParams, cycle_rate: f64) -> f64 {
    cycle_rate * 3600.0 * params.detection_efficiency().powi(m as i32)
}

/// Coincidence rate implied by a simulated table.
pub fn simulated_rate_per_hour(table: &CoincidenceTable, cycle_rate: f64) -> f64 {
    if table.total_cycles == 0 {
        return 0.0;
    }
    cycle_rate * 3600.0 * table.coincidences() as f64 / table.total_cycles as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{eigen_fidelity, fidelity_report};

    #[test]
    fn ideal_trajectory_is_error_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_trajectory(5, &ErrorModelParams::ideal(), &PhaseNoiseParams::none(), 0.0, &mut rng).unwrap();
        assert!(s.is_error_free_pair());
        assert_eq!(s.relative_phase, 0.0);
    }

    #[test]
    fn campaign_is_deterministic() {
        let mut c = Campaign::new(3, 20_000, 42, SettingId::Mi(1));
        c.mode = SamplingMode::Heralded;
        let a = run_campaign(&c).unwrap();
        let b = run_campaign(&c).unwrap();
        assert_eq!(a, b);
        c.master_seed = 43;
        assert_ne!(run_campaign(&c).unwrap(), a);
    }

    #[test]
    fn zero_trajectories_rejected() {
        let c = Campaign::new(2, 0, 1, SettingId::Eigen);
        assert!(run_campaign(&c).is_err());
    }

    #[test]
    fn ideal_direct_campaign_gives_unit_fidelity() {
        let mut base = Campaign::new(3, 5_000, 7, SettingId::Eigen);
        base.params = ErrorModelParams::ideal();
        base.phase = PhaseNoiseParams::none();
        base.mode = SamplingMode::Direct;
        let tables = run_settings(&base, &SettingId::all(3)).unwrap();
        assert_eq!(tables[0].coincidences(), 5_000);
        assert_eq!(eigen_fidelity(&tables[0]).unwrap().value, 1.0);
        let r = fidelity_report(&tables).unwrap();
        assert_eq!(r.f.value, 1.0);
    }

    #[test]
    fn heralded_cycle_count() {
        let mut c = Campaign::new(2, 10_000, 3, SettingId::Eigen);
        c.filter = CoincidenceFilter::Full;
        c.params.p_afterpulse = 0.0;
        let t = run_campaign(&c).unwrap();
        let eta = c.params.detection_efficiency();
        // Reference: exactly one SPD fires in each window (either the photon
        // or a dark count on the other SPD).
        let pd = c.params.p_dark;
        let q = eta * (1.0 - pd) + 2.0 * (1.0 - eta) * pd * (1.0 - pd);
        let p_ref = q * q;
        let expected = (10_000.0 / p_ref) as u64;
        assert!(
            t.total_cycles.abs_diff(expected) <= 10_000 / 100 + 2,
            "{} {}",
            t.total_cycles,
            expected
        );
    }

    #[test]
    fn rate_prediction() {
        let r = predicted_rate_per_hour(6, &ErrorModelParams::default(), 1000.0 / 0.15);
        assert!((r - 16.5).abs() < 0.1, "{r}");
    }
}
