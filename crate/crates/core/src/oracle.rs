//! Exact reference results for small `m`.
//!
//! Every combination of iteration failures, final-retrieval failure and
//! accumulation position is enumerated with its probability. Branches that
//! stay error-free form one coherent pool whose amplitudes follow from the
//! enumerated error-free weights; all other emission patterns add
//! incoherently. Phase noise
//! enters analytically: the Gaussian-averaged interference term is the
//! noiseless one times `beta_phi`. Detection is computed by summing over
//! every micro-event (surviving photons, dark counts, afterpulses) per
//! window, independently of the samplers in [`crate::channels`].

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::channels::{analytic_flip_rates, ErrorModelParams, Failure, IterationEvents, WindowPhotons};
use crate::error::{invalid_arg, Result};
use crate::measurement::{
    make_setting, outcome_distribution, parity_sign, MeasurementSetting, OutcomeDistribution, SettingKind,
};
use crate::phase::{beta_phi, PhaseNoiseParams};
use crate::protocol::{coherent_state, prepare_initial, TwoBranchState};

/// Largest `m` handled by exhaustive enumeration.
pub const MAX_EXACT_M: usize = 4;

#[derive(Clone, Debug)]
pub struct EnumeratedEvent {
    /// Failure in each of the `m - 1` iterations.
    pub failures: Vec<Failure>,
    pub final_failure: Failure,
    /// Iteration (0-based) after which an accumulated component stopped
    /// all emission.
    pub accum_at: Option<usize>,
    pub weight: f64,
    pub state: TwoBranchState,
}

#[derive(Clone, Debug)]
pub struct EventEnumeration {
    pub m: usize,
    pub events: Vec<EnumeratedEvent>,
}

impl EventEnumeration {
    pub fn total_weight(&self) -> f64 {
        self.events.iter().map(|e| e.weight).sum()
    }
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 || m > MAX_EXACT_M {
        return Err(invalid_arg(format!(
            "exact computation supports 1 <= m <= {MAX_EXACT_M}, got {m}"
        )));
    }
    Ok(())
}

pub fn enumerate_events(m: usize, params: &ErrorModelParams) -> Result<EventEnumeration> {
    check_m(m)?;
    params.validate()?;
    let failures: Vec<(Failure, f64)> = params
        .failure_distribution()
        .into_iter()
        .filter(|&(_, p)| p > 0.0)
        .collect();
    let finals: Vec<(Failure, f64)> = [
        (Failure::None, 1.0 - params.p_unexp_rv2),
        (Failure::Rv1Fail, params.p_unexp_rv2),
    ]
    .into_iter()
    .filter(|&(_, p)| p > 0.0)
    .collect();
    let q = params.accumulation_probability();
    let mut accum: Vec<(Option<usize>, f64)> = (0..m - 1).map(|k| (Some(k), (1.0 - q).powi(k as i32) * q)).collect();
    accum.push((None, (1.0 - q).powi(m as i32 - 1)));
    accum.retain(|&(_, p)| p > 0.0);

    let iterations = m - 1;
    let mut events = Vec::new();
    let combos = failures.len().pow(iterations as u32);
    for combo in 0..combos {
        let mut seq = Vec::with_capacity(iterations);
        let mut w_seq = 1.0;
        let mut c = combo;
        for _ in 0..iterations {
            let (f, p) = failures[c % failures.len()];
            c /= failures.len();
            seq.push(f);
            w_seq *= p;
        }
        for &(fin, w_fin) in &finals {
            for &(acc, w_acc) in &accum {
                let mut state = prepare_initial(m)?;
                for (k, &f) in seq.iter().enumerate() {
                    state.iterate(&IterationEvents {
                        failure: f,
                        ..IterationEvents::default()
                    })?;
                    if acc == Some(k) {
                        state.suppress();
                    }
                }
                state.finish(fin)?;
                events.push(EnumeratedEvent {
                    failures: seq.clone(),
                    final_failure: fin,
                    accum_at: acc,
                    weight: w_seq * w_fin * w_acc,
                    state,
                });
            }
        }
    }
    Ok(EventEnumeration { m, events })
}

/// The averaged state as a mixture: a coherent `E^m`/`L^m` pool plus
/// incoherent emission patterns of branches that went through an error.
struct Mixture {
    m: usize,
    /// Total weight of the coherent pool.
    pool: f64,
    /// Branch amplitudes inside the pool.
    amp: (f64, f64),
    /// Emission patterns (photon count per temporal mode) and weights.
    incoherent: BTreeMap<Vec<u8>, f64>,
}

fn mixture(m: usize, params: &ErrorModelParams) -> Result<Mixture> {
    let events = enumerate_events(m, params)?;
    let ideal_a: Vec<u8> = [1, 0].repeat(m);
    let ideal_b: Vec<u8> = [0, 1].repeat(m);
    let (mut good_a, mut good_b) = (0.0f64, 0.0f64);
    let mut pool = 0.0;
    let mut incoherent = BTreeMap::new();
    for ev in &events.events {
        for (branch, ideal, good) in [
            (&ev.state.branch_a, &ideal_a, &mut good_a),
            (&ev.state.branch_b, &ideal_b, &mut good_b),
        ] {
            let w = ev.weight * branch.amplitude * branch.amplitude;
            if !branch.dead && &branch.emission == ideal {
                *good += ev.weight;
                pool += w;
            } else {
                *incoherent.entry(branch.emission.clone()).or_insert(0.0) += w;
            }
        }
    }
    let norm = good_a + good_b;
    let amp = if norm > 0.0 {
        ((good_a / norm).sqrt(), (good_b / norm).sqrt())
    } else {
        (FRAC_1_SQRT_2, FRAC_1_SQRT_2)
    };
    Ok(Mixture {
        m,
        pool,
        amp,
        incoherent,
    })
}

impl Mixture {
    /// Phase-averaged outcome distribution of the coherent pool.
    fn pool_distribution(&self, settings: &[MeasurementSetting], beta: f64) -> Result<Vec<f64>> {
        let coherent = outcome_distribution(&coherent_state(self.m, self.amp.0, self.amp.1)?, settings)?;
        let only_a = branch_distribution(&[1, 0].repeat(self.m), settings);
        let only_b = branch_distribution(&[0, 1].repeat(self.m), settings);
        let (wa, wb) = (self.amp.0 * self.amp.0, self.amp.1 * self.amp.1);
        // Averaging over the Gaussian phase scales the interference term.
        Ok(coherent
            .probabilities
            .iter()
            .zip(only_a.iter().zip(&only_b))
            .map(|(&c, (&a, &b))| {
                let incoherent = wa * a + wb * b;
                incoherent + beta * (c - incoherent)
            })
            .collect())
    }
}

/// Outcome probabilities of a single branch without interference; empty
/// for patterns with an empty or doubly occupied qubit.
fn branch_distribution(emission: &[u8], settings: &[MeasurementSetting]) -> Vec<f64> {
    let m = settings.len();
    let mut probs = vec![0.0; 1 << m];
    let mut late = Vec::with_capacity(m);
    for j in 0..m {
        match (emission[2 * j], emission[2 * j + 1]) {
            (1, 0) => late.push(false),
            (0, 1) => late.push(true),
            _ => return probs,
        }
    }
    for (o, p) in probs.iter_mut().enumerate() {
        *p = settings
            .iter()
            .enumerate()
            .map(|(j, s)| match s.kind {
                SettingKind::Eigen => ((o >> j & 1 == 1) == late[j]) as u8 as f64,
                SettingKind::Superposition => 0.5,
            })
            .product();
    }
    probs
}

fn check_settings(m: usize, settings: &[MeasurementSetting]) -> Result<()> {
    if settings.len() != m {
        return Err(invalid_arg(format!("{} settings given for m = {m}", settings.len())));
    }
    Ok(())
}

/// Exact outcome distribution before detection, averaged over error events
/// and Gaussian phase noise.
pub fn exact_distribution(
    m: usize,
    params: &ErrorModelParams,
    phase: &PhaseNoiseParams,
    settings: &[MeasurementSetting],
) -> Result<OutcomeDistribution> {
    check_settings(m, settings)?;
    let beta = beta_phi(m, phase)?;
    let mix = mixture(m, params)?;
    let mut probabilities: Vec<f64> = mix
        .pool_distribution(settings, beta)?
        .iter()
        .map(|p| mix.pool * p)
        .collect();
    for (emission, &w) in &mix.incoherent {
        for (acc, p) in probabilities.iter_mut().zip(branch_distribution(emission, settings)) {
            *acc += w * p;
        }
    }
    let partial = 1.0 - probabilities.iter().sum::<f64>();
    Ok(OutcomeDistribution {
        m,
        probabilities,
        partial,
    })
}

/// Per-trajectory probabilities of each detection record class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactDetection {
    pub m: usize,
    /// `m`-fold coincidence probability by outcome bitmask.
    pub full: Vec<f64>,
    /// Exactly one empty window, indexed `window * 2^m + bits`.
    pub missing_one: Vec<f64>,
    pub other: f64,
}

impl ExactDetection {
    pub fn coincidence_probability(&self) -> f64 {
        self.full.iter().sum()
    }

    /// Outcome distribution conditioned on an `m`-fold coincidence.
    pub fn conditional(&self) -> Vec<f64> {
        let z = self.coincidence_probability();
        self.full.iter().map(|p| p / z).collect()
    }

    fn add(&mut self, other: &ExactDetection, weight: f64) {
        for (a, b) in self.full.iter_mut().zip(&other.full) {
            *a += weight * b;
        }
        for (a, b) in self.missing_one.iter_mut().zip(&other.missing_one) {
            *a += weight * b;
        }
        self.other += weight * other.other;
    }
}

/// Possible photon contents of one window with their probabilities.
type WindowOptions = Vec<(WindowPhotons, f64)>;

const EMPTY: usize = 0;
const SPD1: usize = 1;
const SPD2: usize = 2;
const BOTH: usize = 3;

/// Detection of independent windows. Returns probabilities indexed by
/// `sum_j reading_j * 4^j`.
struct DetectionEnumerator<'a> {
    windows: &'a [WindowOptions],
    eta: f64,
    p_dark: f64,
    p_ap: f64,
    memo: HashMap<(usize, [bool; 2]), Vec<f64>>,
}

impl DetectionEnumerator<'_> {
    fn suffix(&mut self, j: usize, prev_real: [bool; 2]) -> Vec<f64> {
        if j == self.windows.len() {
            return vec![1.0];
        }
        if let Some(v) = self.memo.get(&(j, prev_real)) {
            return v.clone();
        }
        let width = 4usize.pow((self.windows.len() - j - 1) as u32);
        let mut out = vec![0.0; 4 * width];
        for &(photons, p_photons) in &self.windows[j] {
            // Micro-events per SPD: surviving photons k, dark count d,
            // afterpulse a.
            let per_spd: Vec<Vec<(bool, bool, f64)>> = (0..2)
                .map(|s| {
                    let n = photons.0[s] as i32;
                    let mut outcomes = Vec::new();
                    for k in 0..=n {
                        let p_k = binomial(n, k) * self.eta.powi(k) * (1.0 - self.eta).powi(n - k);
                        for d in [false, true] {
                            let p_d = if d { self.p_dark } else { 1.0 - self.p_dark };
                            for a in [false, true] {
                                let p_a = match (prev_real[s], a) {
                                    (true, true) => self.p_ap,
                                    (true, false) => 1.0 - self.p_ap,
                                    (false, true) => 0.0,
                                    (false, false) => 1.0,
                                };
                                let p = p_k * p_d * p_a;
                                if p > 0.0 {
                                    outcomes.push((k > 0, k > 0 || d || a, p));
                                }
                            }
                        }
                    }
                    outcomes
                })
                .collect();
            for &(real1, click1, p1) in &per_spd[0] {
                for &(real2, click2, p2) in &per_spd[1] {
                    let reading = match (click1, click2) {
                        (false, false) => EMPTY,
                        (true, false) => SPD1,
                        (false, true) => SPD2,
                        (true, true) => BOTH,
                    };
                    let rest = self.suffix(j + 1, [real1, real2]);
                    let p = p_photons * p1 * p2;
                    for (idx, r) in rest.iter().enumerate() {
                        out[reading + 4 * idx] += p * r;
                    }
                }
            }
        }
        self.memo.insert((j, prev_real), out.clone());
        out
    }
}

fn binomial(n: i32, k: i32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn detect_windows(windows: &[WindowOptions], params: &ErrorModelParams) -> ExactDetection {
    let m = windows.len();
    let mut e = DetectionEnumerator {
        windows,
        eta: params.detection_efficiency(),
        p_dark: params.p_dark,
        p_ap: params.p_afterpulse,
        memo: HashMap::new(),
    };
    let readings = e.suffix(0, [false, false]);
    let mut result = ExactDetection {
        m,
        full: vec![0.0; 1 << m],
        missing_one: vec![0.0; m << m],
        other: 0.0,
    };
    for (idx, p) in readings.into_iter().enumerate() {
        let mut bits = 0usize;
        let mut missing = Vec::new();
        let mut ambiguous = false;
        for j in 0..m {
            match (idx / 4usize.pow(j as u32)) % 4 {
                SPD1 => {}
                SPD2 => bits |= 1 << j,
                EMPTY => missing.push(j),
                _ => ambiguous = true,
            }
        }
        match (ambiguous, missing.as_slice()) {
            (false, []) => result.full[bits] += p,
            (false, [w]) => result.missing_one[(w << m) | bits] += p,
            _ => result.other += p,
        }
    }
    result
}

/// Photon options of a branch emitting without interference: eigen
/// settings route early photons to SPD1 and late photons to SPD2;
/// superposition settings send each photon to either SPD with probability
/// 1/2.
fn incoherent_windows(emission: &[u8], settings: &[MeasurementSetting]) -> Vec<WindowOptions> {
    settings
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let (early, late) = (emission[2 * j], emission[2 * j + 1]);
            match s.kind {
                SettingKind::Eigen => vec![(WindowPhotons([early, late]), 1.0)],
                SettingKind::Superposition => {
                    let n = (early + late) as i32;
                    (0..=n)
                        .map(|k| (WindowPhotons([(n - k) as u8, k as u8]), binomial(n, k) * 0.5f64.powi(n)))
                        .collect()
                }
            }
        })
        .collect()
}

/// Exact per-trajectory detection statistics, averaged over error events
/// and phase noise.
pub fn exact_detection(
    m: usize,
    params: &ErrorModelParams,
    phase: &PhaseNoiseParams,
    settings: &[MeasurementSetting],
) -> Result<ExactDetection> {
    check_settings(m, settings)?;
    let beta = beta_phi(m, phase)?;
    let mix = mixture(m, params)?;
    let mut total = ExactDetection {
        m,
        full: vec![0.0; 1 << m],
        missing_one: vec![0.0; m << m],
        other: 0.0,
    };
    for (bits, p) in mix.pool_distribution(settings, beta)?.into_iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let windows: Vec<WindowOptions> = (0..m)
            .map(|j| {
                let late = bits & (1 << j) != 0;
                vec![(WindowPhotons(if late { [0, 1] } else { [1, 0] }), 1.0)]
            })
            .collect();
        total.add(&detect_windows(&windows, params), mix.pool * p);
    }
    for (emission, &w) in &mix.incoherent {
        let windows = incoherent_windows(emission, settings);
        total.add(&detect_windows(&windows, params), w);
    }
    Ok(total)
}

/// Fidelity components predicted by the model chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactFidelity {
    pub m: usize,
    pub f_e: f64,
    pub f_s: f64,
    pub f: f64,
    pub beta_phi: f64,
    /// `F_s` from the exact parity correlations (error and phase model
    /// only) times `beta_res^m`.
    pub f_s_intrinsic: f64,
}

/// `F_e` from the exact eigen coincidences of a lossy but noise-free
/// detector, `F_s = F_e beta_phi beta_res^m`, `F = (F_e + F_s)/2`.
pub fn exact_fidelity(
    m: usize,
    params: &ErrorModelParams,
    phase: &PhaseNoiseParams,
    beta_res: f64,
) -> Result<ExactFidelity> {
    check_m(m)?;
    if !(beta_res > 0.0 && beta_res <= 1.0) {
        return Err(invalid_arg(format!("beta_res = {beta_res} outside (0, 1]")));
    }
    let quiet = params.without_detector_noise();
    let f_e = if m == 1 {
        1.0
    } else {
        let eigen = exact_detection(m, &quiet, phase, &vec![MeasurementSetting::EIGEN; m])?.conditional();
        eigen[0] + eigen[(1 << m) - 1]
    };
    let residual = beta_res.powi(m as i32);
    let mut parity_sum = 0.0;
    for i in 0..m {
        let setting = make_setting(i, m)?;
        let p = exact_detection(m, &quiet, phase, &vec![setting; m])?.conditional();
        let parity: f64 = p.iter().enumerate().map(|(o, p)| parity_sign(o as u32) * p).sum();
        parity_sum += if i % 2 == 0 { parity } else { -parity };
    }
    let b = beta_phi(m, phase)?;
    let f_s = f_e * b * residual;
    Ok(ExactFidelity {
        m,
        f_e,
        f_s,
        f: 0.5 * (f_e + f_s),
        beta_phi: b,
        f_s_intrinsic: parity_sum / m as f64 * residual,
    })
}

/// Closed-form chain for any `m`: `F_e = (1 - avg)^(m-1)` from the average
/// flip rate, `F_s = F_e beta_phi beta_res^m`.
pub fn analytic_fidelity(
    m: usize,
    params: &ErrorModelParams,
    phase: &PhaseNoiseParams,
    beta_res: f64,
) -> Result<ExactFidelity> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    let avg = analytic_flip_rates(params).avg;
    let f_e = (1.0 - avg).powi(m as i32 - 1);
    let b = beta_phi(m, phase)?;
    let f_s = f_e * b * beta_res.powi(m as i32);
    Ok(ExactFidelity {
        m,
        f_e,
        f_s,
        f: 0.5 * (f_e + f_s),
        beta_phi: b,
        f_s_intrinsic: f_s,
    })
}
