//! Time-bin qubit analysis, outcome distributions and coincidence tables.
//!
//! Outcomes of an `m`-qubit measurement are bitmasks: bit `j` is set when
//! qubit `j` gave `L` (eigen basis) or `-` (superposition basis). In files
//! they are written as strings over `E`/`L` or `+`/`-`, one character per
//! qubit in emission order; `0` marks an undetected window.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{detect, ErrorModelParams, RecordClass, Spd, WindowPhotons};
use crate::error::{invalid_arg, invalid_state, Error, Result};
use crate::protocol::{Branch, TimeBinSymbol, TwoBranchState};

/// Largest supported number of qubits per trajectory.
pub const MAX_QUBITS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettingKind {
    Eigen,
    Superposition,
}

/// Single-qubit analysis basis. Superposition settings measure
/// `cos(angle) sigma_x + sin(angle) sigma_y` with eigenstates
/// `|+-> = (|E> +- e^{i angle}|L>)/sqrt(2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub kind: SettingKind,
    pub angle: f64,
}

impl MeasurementSetting {
    pub const EIGEN: MeasurementSetting = MeasurementSetting {
        kind: SettingKind::Eigen,
        angle: 0.0,
    };

    pub fn superposition(angle: f64) -> Result<Self> {
        if !(0.0..PI).contains(&angle) {
            return Err(invalid_arg(format!("angle {angle} outside [0, pi)")));
        }
        Ok(MeasurementSetting {
            kind: SettingKind::Superposition,
            angle,
        })
    }

    /// Projection amplitude `<outcome|symbol>` for a single photon in the
    /// early (`late = false`) or late mode.
    pub fn overlap(&self, outcome_bit: bool, late: bool) -> Complex64 {
        match self.kind {
            SettingKind::Eigen => {
                if outcome_bit == late {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            SettingKind::Superposition => {
                if !late {
                    Complex64::new(FRAC_1_SQRT_2, 0.0)
                } else {
                    let sign = if outcome_bit { -1.0 } else { 1.0 };
                    Complex64::from_polar(sign * FRAC_1_SQRT_2, -self.angle)
                }
            }
        }
    }
}

/// The `m + 1` settings of the fidelity decomposition: `mi:<i>` is the
/// superposition setting at angle `i * pi / m` on every qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SettingId {
    Eigen,
    Mi(usize),
}

impl SettingId {
    pub fn setting(self, m: usize) -> Result<MeasurementSetting> {
        match self {
            SettingId::Eigen => Ok(MeasurementSetting::EIGEN),
            SettingId::Mi(i) => make_setting(i, m),
        }
    }

    pub fn kind(self) -> SettingKind {
        match self {
            SettingId::Eigen => SettingKind::Eigen,
            SettingId::Mi(_) => SettingKind::Superposition,
        }
    }

    /// All settings needed for an `m`-qubit fidelity estimate.
    pub fn all(m: usize) -> Vec<SettingId> {
        std::iter::once(SettingId::Eigen)
            .chain((0..m).map(SettingId::Mi))
            .collect()
    }

    /// Compact code used for seed derivation.
    pub fn code(self) -> u64 {
        match self {
            SettingId::Eigen => 0,
            SettingId::Mi(i) => i as u64 + 1,
        }
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingId::Eigen => write!(f, "eigen"),
            SettingId::Mi(i) => write!(f, "mi:{i}"),
        }
    }
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("eigen") {
            return Ok(SettingId::Eigen);
        }
        s.strip_prefix("mi:")
            .and_then(|i| i.parse().ok())
            .map(SettingId::Mi)
            .ok_or_else(|| invalid_arg(format!("unknown setting '{s}' (expected eigen or mi:<i>)")))
    }
}

impl TryFrom<String> for SettingId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SettingId> for String {
    fn from(id: SettingId) -> String {
        id.to_string()
    }
}

/// `i < m`: superposition at angle `i * pi / m`; `i == m`: eigen basis.
pub fn make_setting(i: usize, m: usize) -> Result<MeasurementSetting> {
    if m == 0 || i > m {
        return Err(invalid_arg(format!("setting index {i} out of range for m = {m}")));
    }
    if i == m {
        Ok(MeasurementSetting::EIGEN)
    } else {
        MeasurementSetting::superposition(i as f64 * PI / m as f64)
    }
}

pub fn outcome_char(kind: SettingKind, bit: bool) -> char {
    match (kind, bit) {
        (SettingKind::Eigen, false) => 'E',
        (SettingKind::Eigen, true) => 'L',
        (SettingKind::Superposition, false) => '+',
        (SettingKind::Superposition, true) => '-',
    }
}

/// Formats an outcome bitmask; `missing` marks an undetected window.
pub fn format_outcome(bits: u32, m: usize, kind: SettingKind, missing: Option<usize>) -> String {
    (0..m)
        .map(|j| {
            if Some(j) == missing {
                '0'
            } else {
                outcome_char(kind, bits & (1 << j) != 0)
            }
        })
        .collect()
}

/// Parses an outcome string. Superposition outcomes also accept the basis
/// letters `D`/`A` and `C`/`P`.
pub fn parse_outcome(s: &str, kind: SettingKind) -> Result<(u32, Option<usize>)> {
    let mut bits = 0u32;
    let mut missing = None;
    let chars: Vec<char> = s.trim().chars().collect();
    if chars.is_empty() || chars.len() > MAX_QUBITS {
        return Err(Error::Data(format!("bad outcome length in '{s}'")));
    }
    for (j, c) in chars.iter().enumerate() {
        let bit = match (kind, c.to_ascii_uppercase()) {
            (SettingKind::Eigen, 'E') => false,
            (SettingKind::Eigen, 'L') => true,
            (SettingKind::Superposition, '+' | 'D' | 'C') => false,
            (SettingKind::Superposition, '-' | '\u{2212}' | 'A' | 'P') => true,
            (_, '0') if missing.is_none() => {
                missing = Some(j);
                false
            }
            _ => return Err(Error::Data(format!("unexpected symbol '{c}' in outcome '{s}'"))),
        };
        if bit {
            bits |= 1 << j;
        }
    }
    Ok((bits, missing))
}

/// Outcome probabilities of one trajectory, before detection.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    pub m: usize,
    /// Indexed by outcome bitmask.
    pub probabilities: Vec<f64>,
    /// Weight of branches with no valid `m`-qubit pattern.
    pub partial: f64,
}

impl OutcomeDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// `sum_o (-1)^{popcount(o)} P(o)`, normalised to the coincidence
    /// probability.
    pub fn parity(&self) -> f64 {
        let total = self.total();
        self.probabilities
            .iter()
            .enumerate()
            .map(|(o, p)| parity_sign(o as u32) * p)
            .sum::<f64>()
            / total
    }
}

pub fn parity_sign(bits: u32) -> f64 {
    if bits.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn valid_symbols(branch: &Branch) -> Option<Vec<bool>> {
    if branch.dead {
        return None;
    }
    let pattern = branch.pattern().ok()?;
    pattern
        .symbols()
        .iter()
        .map(|s| match s {
            TimeBinSymbol::E => Some(false),
            TimeBinSymbol::L => Some(true),
            TimeBinSymbol::X => None,
        })
        .collect()
}

fn check_settings(state: &TwoBranchState, settings: &[MeasurementSetting]) -> Result<usize> {
    if !state.is_complete() {
        return Err(invalid_state("outcome distribution needs a completed state"));
    }
    let m = state.m_target();
    if settings.len() != m {
        return Err(invalid_arg(format!("{} settings given for {m} qubits", settings.len())));
    }
    if m > MAX_QUBITS {
        return Err(invalid_arg(format!("m = {m} exceeds {MAX_QUBITS}")));
    }
    Ok(m)
}

fn branch_amplitude(symbols: &[bool], settings: &[MeasurementSetting], outcome: u32) -> Complex64 {
    symbols
        .iter()
        .zip(settings)
        .enumerate()
        .map(|(j, (&late, s))| s.overlap(outcome & (1 << j) != 0, late))
        .product()
}

/// Exact outcome distribution. Only the error-free pair `E^m`/`L^m`
/// interferes; any branch that went through an error carries a random
/// phase and adds incoherently. Dead branches and branches with empty or
/// doubly occupied qubits contribute to `partial`.
pub fn outcome_distribution(state: &TwoBranchState, settings: &[MeasurementSetting]) -> Result<OutcomeDistribution> {
    let m = check_settings(state, settings)?;
    let n = 1usize << m;
    let mut probabilities = vec![0.0; n];
    let mut partial = 0.0;
    let symbols = [valid_symbols(&state.branch_a), valid_symbols(&state.branch_b)];
    let amps = [
        Complex64::new(state.branch_a.amplitude, 0.0),
        Complex64::from_polar(state.branch_b.amplitude, state.relative_phase),
    ];
    if state.is_error_free_pair() {
        let (sa, sb) = (symbols[0].as_ref().unwrap(), symbols[1].as_ref().unwrap());
        for (o, p) in probabilities.iter_mut().enumerate() {
            let a =
                amps[0] * branch_amplitude(sa, settings, o as u32) + amps[1] * branch_amplitude(sb, settings, o as u32);
            *p = a.norm_sqr();
        }
    } else {
        for (sym, amp) in symbols.iter().zip(amps) {
            let weight = amp.norm_sqr();
            match sym {
                Some(sym) => {
                    for (o, p) in probabilities.iter_mut().enumerate() {
                        *p += weight * branch_amplitude(sym, settings, o as u32).norm_sqr();
                    }
                }
                None => partial += weight,
            }
        }
    }
    Ok(OutcomeDistribution {
        m,
        probabilities,
        partial,
    })
}

fn route(setting: &MeasurementSetting, late: bool, rng: &mut (impl Rng + ?Sized)) -> Spd {
    match setting.kind {
        SettingKind::Eigen => {
            if late {
                Spd::Two
            } else {
                Spd::One
            }
        }
        SettingKind::Superposition => {
            if rng.random_bool(0.5) {
                Spd::Two
            } else {
                Spd::One
            }
        }
    }
}

/// Draws the photons reaching each SPD, window by window, before loss and
/// detector noise. SPD1 registers `E` / `+`, SPD2 registers `L` / `-`.
///
/// The error-free pair is sampled coherently with the chain rule: for the
/// first `m - 1` qubits the two branches are orthogonal on the remaining
/// qubits, so the marginal is the equal mixture; interference enters only at
/// the last qubit. Any other trajectory picks one branch by weight and
/// routes each emitted photon independently.
pub fn sample_photons<R: Rng + ?Sized>(
    state: &TwoBranchState,
    settings: &[MeasurementSetting],
    rng: &mut R,
) -> Result<Vec<WindowPhotons>> {
    let m = check_settings(state, settings)?;
    let mut windows = vec![WindowPhotons::default(); m];
    if state.is_error_free_pair() {
        let sa = valid_symbols(&state.branch_a).unwrap();
        let sb = valid_symbols(&state.branch_b).unwrap();
        let mut amp_a = Complex64::new(state.branch_a.amplitude, 0.0);
        let mut amp_b = Complex64::from_polar(state.branch_b.amplitude, state.relative_phase);
        for j in 0..m {
            let s = &settings[j];
            let weight = |bit: bool, a: Complex64, b: Complex64| {
                let ua = a * s.overlap(bit, sa[j]);
                let ub = b * s.overlap(bit, sb[j]);
                if j + 1 == m {
                    (ua + ub).norm_sqr()
                } else {
                    ua.norm_sqr() + ub.norm_sqr()
                }
            };
            let w0 = weight(false, amp_a, amp_b);
            let w1 = weight(true, amp_a, amp_b);
            let bit = rng.random::<f64>() * (w0 + w1) >= w0;
            amp_a *= s.overlap(bit, sa[j]);
            amp_b *= s.overlap(bit, sb[j]);
            windows[j] = WindowPhotons::single(if bit { Spd::Two } else { Spd::One });
        }
        return Ok(windows);
    }
    let wa = state.branch_a.amplitude.powi(2);
    let wb = state.branch_b.amplitude.powi(2);
    let branch = if rng.random::<f64>() * (wa + wb) < wa {
        &state.branch_a
    } else {
        &state.branch_b
    };
    for (j, w) in windows.iter_mut().enumerate() {
        let (early, late) = branch.pair(j);
        for _ in 0..early {
            w.0[route(&settings[j], false, rng).index()] += 1;
        }
        for _ in 0..late {
            w.0[route(&settings[j], true, rng).index()] += 1;
        }
    }
    Ok(windows)
}

/// Draws an outcome and passes it through the detection chain.
pub fn sample_outcome<R: Rng + ?Sized>(
    state: &TwoBranchState,
    settings: &[MeasurementSetting],
    params: &ErrorModelParams,
    rng: &mut R,
) -> Result<RecordClass> {
    let photons = sample_photons(state, settings, rng)?;
    Ok(detect(&photons, params, rng).classify())
}

/// Coincidence counts for one measurement setting.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceTable {
    m: usize,
    setting: SettingId,
    /// `m`-fold counts by outcome bitmask.
    counts: Vec<u64>,
    /// Records missing exactly one window, indexed `window * 2^m + bits`
    /// (the bit of the missing window is zero).
    missing_one: Vec<u64>,
    /// Every other incomplete record.
    pub partial_other: u64,
    /// Experimental cycles represented by the table.
    pub total_cycles: u64,
    /// Expected spurious counts per outcome, subtracted by the estimators.
    corrections: Vec<f64>,
}

impl CoincidenceTable {
    pub fn new(m: usize, setting: SettingId) -> Result<Self> {
        if m == 0 || m > MAX_QUBITS {
            return Err(invalid_arg(format!("m = {m} outside [1, {MAX_QUBITS}]")));
        }
        if let SettingId::Mi(i) = setting {
            if i >= m {
                return Err(invalid_arg(format!("setting {setting} out of range for m = {m}")));
            }
        }
        let n = 1usize << m;
        Ok(CoincidenceTable {
            m,
            setting,
            counts: vec![0; n],
            missing_one: vec![0; m * n],
            partial_other: 0,
            total_cycles: 0,
            corrections: vec![0.0; n],
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn setting(&self) -> SettingId {
        self.setting
    }

    pub fn kind(&self) -> SettingKind {
        self.setting.kind()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, bits: u32) -> u64 {
        self.counts[bits as usize]
    }

    pub fn set_count(&mut self, bits: u32, count: u64) {
        self.counts[bits as usize] = count;
    }

    pub fn missing_one(&self, window: usize, bits: u32) -> u64 {
        self.missing_one[(window << self.m) | bits as usize]
    }

    pub fn set_missing_one(&mut self, window: usize, bits: u32, count: u64) {
        let mask = !(1u32 << window);
        self.missing_one[(window << self.m) | (bits & mask) as usize] = count;
    }

    pub fn corrections(&self) -> &[f64] {
        &self.corrections
    }

    pub fn set_correction(&mut self, bits: u32, value: f64) {
        self.corrections[bits as usize] = value;
    }

    pub fn has_corrections(&self) -> bool {
        self.corrections.iter().any(|&c| c != 0.0)
    }

    /// Sum of `m`-fold counts.
    pub fn coincidences(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Records with fewer than `m` clean detections.
    pub fn partial_events(&self) -> u64 {
        self.missing_one.iter().sum::<u64>() + self.partial_other
    }

    pub fn record(&mut self, class: RecordClass) {
        match class {
            RecordClass::Full(bits) => self.counts[bits as usize] += 1,
            RecordClass::MissingOne { window, bits } => {
                let mask = !(1u32 << window);
                self.missing_one[(window << self.m) | (bits & mask) as usize] += 1;
            }
            RecordClass::Other => self.partial_other += 1,
        }
    }

    pub fn add(&mut self, class: RecordClass, n: u64) {
        match class {
            RecordClass::Full(bits) => self.counts[bits as usize] += n,
            RecordClass::MissingOne { window, bits } => {
                let mask = !(1u32 << window);
                self.missing_one[(window << self.m) | (bits & mask) as usize] += n;
            }
            RecordClass::Other => self.partial_other += n,
        }
    }

    /// Adds another table of the same shape.
    pub fn merge(&mut self, other: &CoincidenceTable) -> Result<()> {
        if other.m != self.m || other.setting != self.setting {
            return Err(invalid_arg(format!(
                "cannot merge table (m={}, {}) into (m={}, {})",
                other.m, other.setting, self.m, self.setting
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.missing_one.iter_mut().zip(&other.missing_one) {
            *a += b;
        }
        for (a, b) in self.corrections.iter_mut().zip(&other.corrections) {
            *a += b;
        }
        self.partial_other += other.partial_other;
        self.total_cycles += other.total_cycles;
        Ok(())
    }

    /// Counts with the expected spurious contributions removed.
    pub fn effective_counts(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.corrections)
            .map(|(&c, &d)| (c as f64 - d).max(0.0))
            .collect()
    }

    /// Counts normalised to the sum of all `2^m` coincidences.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let eff = self.effective_counts();
        let total: f64 = eff.iter().sum();
        if total <= 0.0 {
            return Err(Error::UndefinedValue("table has no coincidences".into()));
        }
        Ok(eff.into_iter().map(|c| c / total).collect())
    }

    pub fn outcome_label(&self, bits: u32) -> String {
        format_outcome(bits, self.m, self.kind(), None)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# m = {}\n", self.m));
        out.push_str(&format!("# setting = {}\n", self.setting));
        if let Ok(s) = self.setting.setting(self.m) {
            out.push_str(&format!("# angle = {}\n", s.angle));
        }
        out.push_str(&format!("# total_cycles = {}\n", self.total_cycles));
        out.push_str(&format!("# partial_other = {}\n", self.partial_other));
        let corrected = self.has_corrections();
        out.push_str(if corrected {
            "outcome,count,correction\n"
        } else {
            "outcome,count\n"
        });
        for (bits, &c) in self.counts.iter().enumerate() {
            out.push_str(&self.outcome_label(bits as u32));
            if corrected {
                out.push_str(&format!(",{c},{}\n", self.corrections[bits]));
            } else {
                out.push_str(&format!(",{c}\n"));
            }
        }
        for window in 0..self.m {
            for bits in 0..(1u32 << self.m) {
                if bits & (1 << window) != 0 {
                    continue;
                }
                let c = self.missing_one(window, bits);
                if c > 0 {
                    let label = format_outcome(bits, self.m, self.kind(), Some(window));
                    out.push_str(&format!("{label},{c}{}\n", if corrected { ",0" } else { "" }));
                }
            }
        }
        out
    }

    /// Parses the CSV layout written by [`CoincidenceTable::to_csv`]. The
    /// `m` and `setting` metadata lines are required; outcome rows missing
    /// from the file count as zero.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = BTreeMap::new();
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if line.starts_with("outcome") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::Data(format!("line {}: expected outcome,count", lineno + 1)));
            }
            let count: u64 = fields[1]
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad count '{}'", lineno + 1, fields[1])))?;
            let correction: f64 = match fields.get(2) {
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::Data(format!("line {}: bad correction '{s}'", lineno + 1)))?,
                None => 0.0,
            };
            rows.push((fields[0].to_string(), count, correction));
        }
        let setting: SettingId = meta
            .get("setting")
            .ok_or_else(|| Error::Data("missing '# setting = ...' line".into()))?
            .parse()
            .map_err(|e: Error| Error::Data(e.to_string()))?;
        let m = match meta.get("m") {
            Some(v) => v.parse().map_err(|_| Error::Data(format!("bad m '{v}'")))?,
            None => rows
                .first()
                .map(|r| r.0.chars().count())
                .ok_or_else(|| Error::Data("empty table without m".into()))?,
        };
        let mut table = CoincidenceTable::new(m, setting).map_err(|e| Error::Data(e.to_string()))?;
        for key in ["total_cycles", "partial_other"] {
            if let Some(v) = meta.get(key) {
                let n: u64 = v.parse().map_err(|_| Error::Data(format!("bad {key} '{v}'")))?;
                if key == "total_cycles" {
                    table.total_cycles = n;
                } else {
                    table.partial_other = n;
                }
            }
        }
        for (label, count, correction) in rows {
            table.insert_row(&label, count, correction)?;
        }
        Ok(table)
    }

    fn insert_row(&mut self, label: &str, count: u64, correction: f64) -> Result<()> {
        if label.chars().count() != self.m {
            return Err(Error::Data(format!(
                "outcome '{label}' does not have {} symbols",
                self.m
            )));
        }
        let (bits, missing) = parse_outcome(label, self.kind())?;
        match missing {
            None => {
                self.counts[bits as usize] += count;
                self.corrections[bits as usize] += correction;
            }
            Some(window) => self.add(RecordClass::MissingOne { window, bits }, count),
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            m: self.m,
            setting: self.setting,
            angle: self.setting.setting(self.m).map(|s| s.angle).unwrap_or(0.0),
            total_cycles: self.total_cycles,
            partial_other: self.partial_other,
            counts: (0..self.counts.len())
                .map(|b| (self.outcome_label(b as u32), self.counts[b]))
                .collect(),
            missing_one: (0..self.m)
                .flat_map(|w| (0..(1u32 << self.m)).map(move |b| (w, b)))
                .filter(|&(w, b)| b & (1 << w) == 0 && self.missing_one(w, b) > 0)
                .map(|(w, b)| (format_outcome(b, self.m, self.kind(), Some(w)), self.missing_one(w, b)))
                .collect(),
            corrections: if self.has_corrections() {
                (0..self.counts.len())
                    .filter(|&b| self.corrections[b] != 0.0)
                    .map(|b| (self.outcome_label(b as u32), self.corrections[b]))
                    .collect()
            } else {
                BTreeMap::new()
            },
        };
        let mut s = serde_json::to_string_pretty(&file).expect("table serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("invalid table JSON: {e}")))?;
        let mut table = CoincidenceTable::new(file.m, file.setting).map_err(|e| Error::Data(e.to_string()))?;
        table.total_cycles = file.total_cycles;
        table.partial_other = file.partial_other;
        for (label, count) in file.counts.iter().chain(&file.missing_one) {
            table.insert_row(label, *count, 0.0)?;
        }
        for (label, c) in &file.corrections {
            let (bits, missing) = parse_outcome(label, table.kind())?;
            if missing.is_some() || label.chars().count() != table.m {
                return Err(Error::Data(format!("bad correction outcome '{label}'")));
            }
            table.corrections[bits as usize] = *c;
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    m: usize,
    setting: SettingId,
    #[serde(default)]
    angle: f64,
    #[serde(default)]
    total_cycles: u64,
    #[serde(default)]
    partial_other: u64,
    counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    missing_one: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    corrections: BTreeMap<String, f64>,
}

/// Accumulates classified records into a table.
pub fn tabulate<I>(m: usize, setting: SettingId, samples: I) -> Result<CoincidenceTable>
where
    I: IntoIterator<Item = RecordClass>,
{
    let mut table = CoincidenceTable::new(m, setting)?;
    for s in samples {
        table.record(s);
        table.total_cycles += 1;
    }
    Ok(table)
}

/// Parity expectation `sum_o (-1)^{#minus(o)} c_o / sum_o c_o`.
pub fn correlation_value(table: &CoincidenceTable) -> Result<f64> {
    if table.kind() != SettingKind::Superposition {
        return Err(invalid_arg("correlation needs a superposition table"));
    }
    let p = table.normalized()?;
    Ok(p.iter().enumerate().map(|(o, p)| parity_sign(o as u32) * p).sum())
}

/// Second-order autocorrelation `p_s1s2 / (p_s1 p_s2)`.
pub fn g2_estimate(p_s1s2: f64, p_s1: f64, p_s2: f64) -> Result<f64> {
    if !(p_s1 > 0.0 && p_s2 > 0.0) {
        return Err(Error::UndefinedValue("g2 needs nonzero marginals".into()));
    }
    Ok(p_s1s2 / (p_s1 * p_s2))
}
