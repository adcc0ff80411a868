//! Iteration error events and the photon detection chain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::protocol::TwoBranchState;

/// Effective error, efficiency and noise rates of the source and detectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModelParams {
    /// Failure probability of each patching pi pulse.
    pub p_patch_fail: f64,
    /// Probability that `Rv2` also retrieves `R1`.
    pub p_unexp_rv1: f64,
    /// Probability that `Rv1` also retrieves `R2`.
    pub p_unexp_rv2: f64,
    /// Accumulated-component probability per re-created excitation.
    pub p_accum: f64,
    pub eta_f: f64,
    pub eta_t: f64,
    pub eta_d: f64,
    /// Noise click probability per SPD per window.
    pub p_dark: f64,
    /// Fake click in the next window after a real detection.
    pub p_afterpulse: f64,
}

impl Default for ErrorModelParams {
    fn default() -> Self {
        ErrorModelParams {
            p_patch_fail: 0.02,
            p_unexp_rv1: 0.03,
            p_unexp_rv2: 0.01,
            p_accum: 0.02,
            eta_f: 0.272,
            eta_t: 0.508,
            eta_d: 0.68,
            p_dark: 0.001,
            p_afterpulse: 0.001,
        }
    }
}

impl ErrorModelParams {
    /// No failures, no noise, unit efficiencies.
    pub fn ideal() -> Self {
        ErrorModelParams {
            p_patch_fail: 0.0,
            p_unexp_rv1: 0.0,
            p_unexp_rv2: 0.0,
            p_accum: 0.0,
            eta_f: 1.0,
            eta_t: 1.0,
            eta_d: 1.0,
            p_dark: 0.0,
            p_afterpulse: 0.0,
        }
    }

    /// Same source, detectors without dark counts or afterpulses.
    pub fn without_detector_noise(self) -> Self {
        ErrorModelParams {
            p_dark: 0.0,
            p_afterpulse: 0.0,
            ..self
        }
    }

    /// Same detection chain, error-free source.
    pub fn without_source_errors(self) -> Self {
        ErrorModelParams {
            p_patch_fail: 0.0,
            p_unexp_rv1: 0.0,
            p_unexp_rv2: 0.0,
            p_accum: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_patch_fail", self.p_patch_fail),
            ("p_unexp_rv1", self.p_unexp_rv1),
            ("p_unexp_rv2", self.p_unexp_rv2),
            ("p_accum", self.p_accum),
            ("eta_f", self.eta_f),
            ("eta_t", self.eta_t),
            ("eta_d", self.eta_d),
            ("p_dark", self.p_dark),
            ("p_afterpulse", self.p_afterpulse),
        ];
        for (name, value) in fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid_arg(format!("{name} = {value} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Overall single-photon detection probability.
    pub fn detection_efficiency(&self) -> f64 {
        self.eta_f * self.eta_t * self.eta_d
    }

    /// Probability of each iteration outcome under the single-failure
    /// approximation. If the failure rates add up to more than one they are
    /// renormalised and `None` gets zero weight.
    pub fn failure_distribution(&self) -> [(Failure, f64); 5] {
        let weights = [self.p_unexp_rv2, self.p_patch_fail, self.p_unexp_rv1, self.p_patch_fail];
        let total: f64 = weights.iter().sum();
        let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
        let none = (1.0 - total).max(0.0);
        [
            (Failure::None, none),
            (Failure::Rv1Fail, weights[0] * scale),
            (Failure::P1Fail, weights[1] * scale),
            (Failure::Rv2Fail, weights[2] * scale),
            (Failure::P2Fail, weights[3] * scale),
        ]
    }

    /// Probability that a retrieve/patch cycle leaves an accumulated
    /// component. Each patching op carries half of the per-excitation rate
    /// because it re-creates the excitation in only one of the two branches.
    pub fn accumulation_probability(&self) -> f64 {
        1.0 - (1.0 - 0.5 * self.p_accum).powi(2)
    }
}

/// Probabilities that branch `a` (starting in `R1`) and branch `b`
/// (starting in `R2`) run through all `m - 1` iterations and the final
/// retrieval without an error that changes their own emission. Failures
/// only act on the occupation they address: `P1`/`Rv2` failures on `R1`,
/// `Rv1`/`P2` failures on `R2`, and the final `Rv1` failure on `R2`.
/// Accumulated components affect both branches alike and are left out.
pub fn error_free_probabilities(m: usize, params: &ErrorModelParams) -> (f64, f64) {
    let d = params.failure_distribution();
    let keep_a = d[0].1 + d[1].1 + d[4].1;
    let keep_b = d[0].1 + d[2].1 + d[3].1;
    let n = m.saturating_sub(1) as i32;
    (keep_a.powi(n), keep_b.powi(n) * (1.0 - params.p_unexp_rv2))
}

/// Which operation of an iteration failed, if any.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Failure {
    #[default]
    None,
    /// `Rv1` also retrieved `R2`.
    Rv1Fail,
    /// `P1` did not create an excitation.
    P1Fail,
    /// `Rv2` also retrieved `R1`.
    Rv2Fail,
    /// `P2` did not create an excitation.
    P2Fail,
}

impl Failure {
    pub const ALL: [Failure; 5] = [
        Failure::None,
        Failure::Rv1Fail,
        Failure::P1Fail,
        Failure::Rv2Fail,
        Failure::P2Fail,
    ];
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IterationEvents {
    pub failure: Failure,
    /// Accumulated component created by `P1` / `P2`.
    pub accum: [bool; 2],
}

impl IterationEvents {
    pub fn accum_triggered(&self) -> bool {
        self.accum[0] || self.accum[1]
    }
}

pub fn sample_iteration_events<R: Rng + ?Sized>(params: &ErrorModelParams, rng: &mut R) -> IterationEvents {
    let dist = params.failure_distribution();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut failure = Failure::None;
    // Walk the failure entries first so that `None` absorbs rounding.
    for &(f, p) in &dist[1..] {
        acc += p;
        if u < acc {
            failure = f;
            break;
        }
    }
    let p_op = 0.5 * params.p_accum;
    let accum = [rng.random_bool(p_op), rng.random_bool(p_op)];
    IterationEvents { failure, accum }
}

/// Failure during the final unpatched retrieval: only `Rv1` retrieving
/// `R2` matters there.
pub fn sample_final_failure<R: Rng + ?Sized>(params: &ErrorModelParams, rng: &mut R) -> Failure {
    if rng.random_bool(params.p_unexp_rv2) {
        Failure::Rv1Fail
    } else {
        Failure::None
    }
}

/// Per-iteration flip probabilities of the `|0>|1>` (`p1`) and `|1>|0>`
/// (`p2`) components; the `Rv2` failure counts twice in `p2` because it
/// releases an extra photon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipRates {
    pub p1: f64,
    pub p2: f64,
    pub avg: f64,
}

pub fn analytic_flip_rates(params: &ErrorModelParams) -> FlipRates {
    let p1 = params.p_unexp_rv2;
    let p2 = params.p_patch_fail + 2.0 * params.p_unexp_rv1;
    FlipRates {
        p1,
        p2,
        avg: 0.5 * (p1 + p2),
    }
}

/// Suppresses all later emission when the iteration created an
/// accumulated component.
pub fn apply_accumulation(state: &TwoBranchState, events: &IterationEvents) -> TwoBranchState {
    let mut next = state.clone();
    if events.accum_triggered() {
        next.suppress();
    }
    next
}

/// Single-photon detector index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spd {
    One,
    Two,
}

impl Spd {
    pub fn index(self) -> usize {
        match self {
            Spd::One => 0,
            Spd::Two => 1,
        }
    }

    pub fn from_index(i: usize) -> Spd {
        if i == 0 {
            Spd::One
        } else {
            Spd::Two
        }
    }
}

/// Photons routed to each SPD in one time-bin window, after the analysis
/// optics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct WindowPhotons(pub [u8; 2]);

impl WindowPhotons {
    pub fn single(spd: Spd) -> Self {
        let mut w = WindowPhotons::default();
        w.0[spd.index()] = 1;
        w
    }

    pub fn total(&self) -> u8 {
        self.0[0] + self.0[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowReading {
    Empty,
    Click {
        spd: Spd,
        real: bool,
    },
    /// Both SPDs fired.
    Ambiguous,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionRecord {
    pub windows: Vec<WindowReading>,
}

/// Coarse classification of a detection record. Outcome bits use bit `j`
/// for window `j`, set when SPD2 fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RecordClass {
    Full(u32),
    /// Exactly one empty window; every other window a single click.
    MissingOne {
        window: usize,
        bits: u32,
    },
    Other,
}

impl DetectionRecord {
    pub fn classify(&self) -> RecordClass {
        let mut bits = 0u32;
        let mut missing = None;
        for (j, w) in self.windows.iter().enumerate() {
            match w {
                WindowReading::Click { spd: Spd::One, .. } => {}
                WindowReading::Click { spd: Spd::Two, .. } => bits |= 1 << j,
                WindowReading::Empty if missing.is_none() => missing = Some(j),
                _ => return RecordClass::Other,
            }
        }
        match missing {
            None => RecordClass::Full(bits),
            Some(window) => RecordClass::MissingOne { window, bits },
        }
    }

    pub fn count_real(&self) -> usize {
        self.windows
            .iter()
            .filter(|w| matches!(w, WindowReading::Click { real: true, .. }))
            .count()
    }
}

/// Samples the detection chain for one trajectory: per-photon loss, dark
/// counts on each SPD, and afterpulses in the window following a real
/// detection on the same SPD.
pub fn detect<R: Rng + ?Sized>(photons: &[WindowPhotons], params: &ErrorModelParams, rng: &mut R) -> DetectionRecord {
    let eta = params.detection_efficiency();
    let mut prev_real = [false; 2];
    let mut windows = Vec::with_capacity(photons.len());
    for w in photons {
        let mut real = [false; 2];
        let mut click = [false; 2];
        for s in 0..2 {
            for _ in 0..w.0[s] {
                if rng.random_bool(eta) {
                    real[s] = true;
                }
            }
            let dark = rng.random_bool(params.p_dark);
            let after = prev_real[s] && rng.random_bool(params.p_afterpulse);
            click[s] = real[s] || dark || after;
        }
        windows.push(match click {
            [false, false] => WindowReading::Empty,
            [true, true] => WindowReading::Ambiguous,
            [true, false] => WindowReading::Click {
                spd: Spd::One,
                real: real[0],
            },
            [false, true] => WindowReading::Click {
                spd: Spd::Two,
                real: real[1],
            },
        });
        prev_real = real;
    }
    DetectionRecord { windows }
}

/// Which detection records a conditioned sampler keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoincidenceFilter {
    /// m-fold coincidences only.
    Full,
    /// m-fold coincidences and records missing exactly one window.
    FullOrMissingOne,
}

/// Reading of one window as seen by the conditioned sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reading {
    Empty,
    Click(usize),
    Ambiguous,
}

/// One possible detection result of a window: which SPDs had a real
/// detection (bitmask) and what was read out.
#[derive(Clone, Copy, Debug)]
struct Transition {
    real: u8,
    reading: Reading,
    prob: f64,
}

const NO_TRANSITION: Transition = Transition {
    real: 0,
    reading: Reading::Empty,
    prob: 0.0,
};

/// All detection results of one window given the previous real mask.
#[derive(Clone, Copy, Debug)]
struct Transitions {
    items: [Transition; 16],
    len: usize,
}

impl Transitions {
    fn as_slice(&self) -> &[Transition] {
        &self.items[..self.len]
    }
}

#[allow(clippy::needless_range_loop)]
fn window_transitions(photons: WindowPhotons, prev_real: u8, params: &ErrorModelParams) -> Transitions {
    let mut out = Transitions {
        items: [NO_TRANSITION; 16],
        len: 0,
    };
    let eta = params.detection_efficiency();
    let p_real = [0, 1].map(|s| 1.0 - (1.0 - eta).powi(photons.0[s] as i32));
    // Probability of a noise click on SPD s (dark or afterpulse).
    let p_noise = [0, 1].map(|s| {
        let ap = if prev_real & (1 << s) != 0 {
            params.p_afterpulse
        } else {
            0.0
        };
        1.0 - (1.0 - params.p_dark) * (1.0 - ap)
    });
    for real in 0u8..4 {
        let mut p_r = 1.0;
        for s in 0..2 {
            p_r *= if real & (1 << s) != 0 {
                p_real[s]
            } else {
                1.0 - p_real[s]
            };
        }
        if p_r == 0.0 {
            continue;
        }
        for clicks in 0u8..4 {
            let mut p_c = 1.0;
            for s in 0..2 {
                let is_real = real & (1 << s) != 0;
                let fired = clicks & (1 << s) != 0;
                p_c *= match (is_real, fired) {
                    (true, true) => 1.0,
                    (true, false) => 0.0,
                    (false, true) => p_noise[s],
                    (false, false) => 1.0 - p_noise[s],
                };
            }
            if p_c == 0.0 {
                continue;
            }
            let reading = match clicks {
                0 => Reading::Empty,
                1 => Reading::Click(0),
                2 => Reading::Click(1),
                _ => Reading::Ambiguous,
            };
            out.items[out.len] = Transition {
                real,
                reading,
                prob: p_r * p_c,
            };
            out.len += 1;
        }
    }
    out
}

/// Samples detection records conditioned on a coincidence filter, using a
/// backward table over the DP state `(real-detection mask, missing count)`
/// after each window; the real mask drives afterpulses in the next window.
#[derive(Clone, Copy, Debug)]
pub struct ConditionedDetector<'a> {
    params: &'a ErrorModelParams,
    filter: CoincidenceFilter,
}

/// Backward table of one photon record.
#[derive(Clone, Debug)]
pub struct PreparedRecord {
    /// Probability that the record passes the filter.
    pub probability: f64,
    beta: Vec<[f64; 8]>,
    transitions: Vec<[Transitions; 4]>,
}

const fn dp_index(real: u8, missing: u8) -> usize {
    (real as usize) | ((missing as usize) << 2)
}

impl<'a> ConditionedDetector<'a> {
    pub fn new(params: &'a ErrorModelParams, filter: CoincidenceFilter) -> Self {
        ConditionedDetector { params, filter }
    }

    fn max_missing(&self) -> u8 {
        match self.filter {
            CoincidenceFilter::Full => 0,
            CoincidenceFilter::FullOrMissingOne => 1,
        }
    }

    pub fn prepare(&self, photons: &[WindowPhotons]) -> PreparedRecord {
        let n = photons.len();
        let max_missing = self.max_missing();
        let transitions: Vec<[Transitions; 4]> = photons
            .iter()
            .map(|&w| [0u8, 1, 2, 3].map(|prev| window_transitions(w, prev, self.params)))
            .collect();
        let mut beta = vec![[0.0; 8]; n + 1];
        for missing in 0..=max_missing {
            for real in 0..4 {
                beta[n][dp_index(real, missing)] = 1.0;
            }
        }
        for j in (0..n).rev() {
            for missing in 0..=max_missing {
                for prev in 0..4u8 {
                    let mut total = 0.0;
                    for t in transitions[j][prev as usize].as_slice() {
                        if let Some(next_missing) = advance(t.reading, missing, max_missing) {
                            total += t.prob * beta[j + 1][dp_index(t.real, next_missing)];
                        }
                    }
                    beta[j][dp_index(prev, missing)] = total;
                }
            }
        }
        PreparedRecord {
            probability: beta[0][dp_index(0, 0)],
            beta,
            transitions,
        }
    }

    /// Draws one record passing the filter from a prepared photon record
    /// with nonzero probability.
    pub fn sample<R: Rng + ?Sized>(&self, prepared: &PreparedRecord, rng: &mut R) -> RecordClass {
        let max_missing = self.max_missing();
        let mut prev = 0u8;
        let mut missing = 0u8;
        let mut bits = 0u32;
        let mut missing_window = None;
        for (j, options) in prepared.transitions.iter().enumerate() {
            let options = options[prev as usize].as_slice();
            let weight = |t: &Transition| match advance(t.reading, missing, max_missing) {
                Some(nm) => t.prob * prepared.beta[j + 1][dp_index(t.real, nm)],
                None => 0.0,
            };
            let total: f64 = options.iter().map(weight).sum();
            let mut u = rng.random::<f64>() * total;
            let mut chosen = None;
            for t in options {
                let wt = weight(t);
                if wt <= 0.0 {
                    continue;
                }
                chosen = Some(*t);
                if u < wt {
                    break;
                }
                u -= wt;
            }
            let t = chosen.expect("conditioned sampling on a zero-probability record");
            match t.reading {
                Reading::Click(1) => bits |= 1 << j,
                Reading::Empty => missing_window = Some(j),
                _ => {}
            }
            missing = advance(t.reading, missing, max_missing).unwrap();
            prev = t.real;
        }
        match missing_window {
            None => RecordClass::Full(bits),
            Some(window) => RecordClass::MissingOne { window, bits },
        }
    }
}

fn advance(reading: Reading, missing: u8, max_missing: u8) -> Option<u8> {
    match reading {
        Reading::Click(_) => Some(missing),
        Reading::Empty if missing < max_missing => Some(missing + 1),
        _ => None,
    }
}
