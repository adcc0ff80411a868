//! Two-branch trajectory state and the retrieve/patch protocol.
//!
//! A trajectory is tracked as the two classical emission branches of the
//! atomic superposition `(|0>_1|1>_2 + |1>_1|0>_2)/sqrt(2)`. Each iteration
//! applies `Rv1 -> P1 -> Rv2 -> P2` and appends one pair of temporal modes
//! (early, late) to both branches. The final step retrieves both atomic
//! qubits without patching.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channels::{Failure, IterationEvents};
use crate::error::{invalid_arg, invalid_state, Result};

/// Amplitude magnitude of each branch in the prepared superposition.
pub const BRANCH_AMPLITUDE: f64 = FRAC_1_SQRT_2;

/// Occupation of the two Rydberg qubits `(r1, r2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Occupation {
    pub r1: bool,
    pub r2: bool,
}

impl Occupation {
    pub const R1: Occupation = Occupation { r1: true, r2: false };
    pub const R2: Occupation = Occupation { r1: false, r2: true };
    pub const EMPTY: Occupation = Occupation { r1: false, r2: false };

    pub fn bits(self) -> (u8, u8) {
        (self.r1 as u8, self.r2 as u8)
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.bits();
        write!(f, "{a}{b}")
    }
}

/// One emission branch of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub occupation: Occupation,
    /// Photon count per elapsed temporal mode; mode `2j` is the early mode
    /// of time-bin qubit `j` (0-based).
    pub emission: Vec<u8>,
    pub amplitude: f64,
    /// Terminated by loss or by an accumulated component; emits nothing
    /// further.
    pub dead: bool,
}

impl Branch {
    fn new(occupation: Occupation, capacity: usize) -> Self {
        Branch {
            occupation,
            emission: Vec::with_capacity(capacity),
            amplitude: BRANCH_AMPLITUDE,
            dead: false,
        }
    }

    /// Time-bin pattern of the emitted modes so far.
    pub fn pattern(&self) -> Result<TimeBinPattern> {
        to_time_bin(&self.emission)
    }

    /// Photon counts `(early, late)` of time-bin qubit `qubit`.
    pub fn pair(&self, qubit: usize) -> (u8, u8) {
        (self.emission[2 * qubit], self.emission[2 * qubit + 1])
    }

    fn is_uniform(&self, pair: (u8, u8)) -> bool {
        self.emission.chunks_exact(2).all(|c| (c[0], c[1]) == pair)
    }

    fn push_pair(&mut self, pair: (u8, u8)) {
        self.emission.push(pair.0);
        self.emission.push(pair.1);
    }

    fn iterate(&mut self, failure: Failure) {
        if self.dead {
            self.push_pair((0, 0));
            return;
        }
        let (pair, next) = iteration_row(self.occupation, failure);
        self.push_pair(pair);
        if next == Occupation::EMPTY {
            self.dead = true;
        }
        self.occupation = next;
    }

    fn retrieve_final(&mut self, failure: Failure) {
        let pair = if self.dead {
            (0, 0)
        } else {
            match (self.occupation, failure) {
                (Occupation::R1, _) => (1, 0),
                // Rv1 also retrieves R2, so the photon leaves in the early mode.
                (Occupation::R2, Failure::Rv1Fail) => (1, 0),
                (Occupation::R2, _) => (0, 1),
                _ => (0, 0),
            }
        };
        self.push_pair(pair);
        self.occupation = Occupation::EMPTY;
    }
}

/// Emitted `(early, late)` photon counts and the occupation after one
/// `Rv1 -> P1 -> Rv2 -> P2` iteration, for a single failed operation.
///
/// ```text
///                 start 01            start 10
/// none            01 -> 01            10 -> 10
/// Rv1 fails       10 -> 10  (flip)    10 -> 10
/// P1 fails        01 -> 01            10 -> 01  (flip)
/// Rv2 fails       01 -> 01            11 -> 01  (flip, extra photon)
/// P2 fails        01 -> 00  (loss)    10 -> 10
/// ```
pub fn iteration_row(occupation: Occupation, failure: Failure) -> ((u8, u8), Occupation) {
    match occupation {
        Occupation::R1 => match failure {
            Failure::P1Fail => ((1, 0), Occupation::R2),
            Failure::Rv2Fail => ((1, 1), Occupation::R2),
            _ => ((1, 0), Occupation::R1),
        },
        Occupation::R2 => match failure {
            Failure::Rv1Fail => ((1, 0), Occupation::R1),
            Failure::P2Fail => ((0, 1), Occupation::EMPTY),
            _ => ((0, 1), Occupation::R2),
        },
        _ => ((0, 0), Occupation::EMPTY),
    }
}

/// Joint atom + photon trajectory state.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoBranchState {
    /// Branch that starts in `|1>_1|0>_2` (emits early modes).
    pub branch_a: Branch,
    /// Branch that starts in `|0>_1|1>_2` (emits late modes).
    pub branch_b: Branch,
    /// Relative phase of `branch_b` against `branch_a`, radians.
    pub relative_phase: f64,
    m_target: usize,
    complete: bool,
}

impl TwoBranchState {
    pub fn m_target(&self) -> usize {
        self.m_target
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn emitted_modes(&self) -> usize {
        self.branch_a.emission.len()
    }

    pub fn branches(&self) -> [&Branch; 2] {
        [&self.branch_a, &self.branch_b]
    }

    /// Runs one retrieve/patch iteration in place.
    pub fn iterate(&mut self, events: &IterationEvents) -> Result<()> {
        if self.complete {
            return Err(invalid_state("iteration applied to a completed state"));
        }
        if self.emitted_modes() >= 2 * (self.m_target - 1) {
            return Err(invalid_state(format!(
                "all {} iterations already ran; finalize is next",
                self.m_target - 1
            )));
        }
        self.branch_a.iterate(events.failure);
        self.branch_b.iterate(events.failure);
        Ok(())
    }

    /// Retrieves both atomic qubits in order, appending the last time-bin
    /// pair. Only an `Rv1` failure has an effect here.
    pub fn finish(&mut self, failure: Failure) -> Result<()> {
        if self.complete {
            return Err(invalid_state("state is already complete"));
        }
        let expected = 2 * (self.m_target - 1);
        if self.emitted_modes() != expected {
            return Err(invalid_state(format!(
                "finalize needs {expected} emitted modes, found {}",
                self.emitted_modes()
            )));
        }
        self.branch_a.retrieve_final(failure);
        self.branch_b.retrieve_final(failure);
        self.complete = true;
        Ok(())
    }

    /// Stops all further emission of both branches.
    pub fn suppress(&mut self) {
        self.branch_a.dead = true;
        self.branch_b.dead = true;
    }

    /// True when both branches are alive and emitted the error-free
    /// patterns `E^m` and `L^m`. Only this pair interferes at measurement.
    pub fn is_error_free_pair(&self) -> bool {
        if !self.complete || self.branch_a.dead || self.branch_b.dead {
            return false;
        }
        let (a, b) = (&self.branch_a, &self.branch_b);
        (a.is_uniform((1, 0)) && b.is_uniform((0, 1))) || (a.is_uniform((0, 1)) && b.is_uniform((1, 0)))
    }
}

pub fn prepare_initial(m_target: usize) -> Result<TwoBranchState> {
    if m_target == 0 {
        return Err(invalid_arg("m_target must be at least 1"));
    }
    Ok(TwoBranchState {
        branch_a: Branch::new(Occupation::R1, 2 * m_target),
        branch_b: Branch::new(Occupation::R2, 2 * m_target),
        relative_phase: 0.0,
        m_target,
        complete: false,
    })
}

pub fn run_iteration(state: &TwoBranchState, events: &IterationEvents) -> Result<TwoBranchState> {
    let mut next = state.clone();
    next.iterate(events)?;
    Ok(next)
}

/// Error-free final retrieval.
pub fn finalize(state: &TwoBranchState) -> Result<TwoBranchState> {
    finalize_with(state, Failure::None)
}

pub fn finalize_with(state: &TwoBranchState, failure: Failure) -> Result<TwoBranchState> {
    let mut next = state.clone();
    next.finish(failure)?;
    Ok(next)
}

/// The completed error-free state `(|E>^m + |L>^m)/sqrt(2)`.
pub fn ideal_state(m: usize) -> Result<TwoBranchState> {
    let mut state = prepare_initial(m)?;
    for _ in 1..m {
        state.iterate(&IterationEvents::default())?;
    }
    state.finish(Failure::None)?;
    Ok(state)
}

/// Error-free pattern pair with unequal branch amplitudes
/// `amp_a |E>^m + amp_b |L>^m`.
pub fn coherent_state(m: usize, amp_a: f64, amp_b: f64) -> Result<TwoBranchState> {
    if !(amp_a >= 0.0 && amp_b >= 0.0 && ((amp_a * amp_a + amp_b * amp_b) - 1.0).abs() < 1e-9) {
        return Err(invalid_arg(format!("amplitudes ({amp_a}, {amp_b}) are not normalised")));
    }
    let mut state = ideal_state(m)?;
    state.branch_a.amplitude = amp_a;
    state.branch_b.amplitude = amp_b;
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeBinSymbol {
    E,
    L,
    /// Empty pair or a pair holding more than one photon.
    X,
}

impl TimeBinSymbol {
    pub fn as_char(self) -> char {
        match self {
            TimeBinSymbol::E => 'E',
            TimeBinSymbol::L => 'L',
            TimeBinSymbol::X => 'X',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TimeBinPattern(Vec<TimeBinSymbol>);

impl TimeBinPattern {
    pub fn symbols(&self) -> &[TimeBinSymbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// No `X` symbols.
    pub fn is_valid(&self) -> bool {
        !self.0.contains(&TimeBinSymbol::X)
    }
}

impl fmt::Display for TimeBinPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|s| write!(f, "{}", s.as_char()))
    }
}

/// Combines neighbouring temporal modes into time-bin qubits:
/// `(1,0) -> E`, `(0,1) -> L`, anything else `X`.
pub fn to_time_bin(emission: &[u8]) -> Result<TimeBinPattern> {
    if !emission.len().is_multiple_of(2) {
        return Err(invalid_arg(format!("emission list has odd length {}", emission.len())));
    }
    Ok(TimeBinPattern(
        emission
            .chunks_exact(2)
            .map(|pair| match (pair[0], pair[1]) {
                (1, 0) => TimeBinSymbol::E,
                (0, 1) => TimeBinSymbol::L,
                _ => TimeBinSymbol::X,
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(failure: Failure) -> IterationEvents {
        IterationEvents {
            failure,
            ..IterationEvents::default()
        }
    }

    fn single_branch(occupation: Occupation, failure: Failure) -> Branch {
        let mut b = Branch::new(occupation, 2);
        b.iterate(failure);
        b
    }

    #[test]
    fn prepare_initial_sets_both_branches() {
        for m in [1, 6] {
            let s = prepare_initial(m).unwrap();
            assert_eq!(s.branch_a.occupation, Occupation::R1);
            assert_eq!(s.branch_b.occupation, Occupation::R2);
            assert_eq!(s.branch_a.amplitude, FRAC_1_SQRT_2);
            assert_eq!(s.branch_b.amplitude, FRAC_1_SQRT_2);
            assert_eq!(s.relative_phase, 0.0);
            assert_eq!(s.m_target(), m);
            assert!(s.branch_a.emission.is_empty());
        }
        assert!(matches!(prepare_initial(0), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn table_rows() {
        use Failure::*;
        // (start, failure, emitted pair, next occupation, dead)
        let rows = [
            (Occupation::R2, Rv1Fail, (1, 0), Occupation::R1, false),
            (Occupation::R2, P1Fail, (0, 1), Occupation::R2, false),
            (Occupation::R2, Rv2Fail, (0, 1), Occupation::R2, false),
            (Occupation::R2, P2Fail, (0, 1), Occupation::EMPTY, true),
            (Occupation::R1, Rv1Fail, (1, 0), Occupation::R1, false),
            (Occupation::R1, P1Fail, (1, 0), Occupation::R2, false),
            (Occupation::R1, Rv2Fail, (1, 1), Occupation::R2, false),
            (Occupation::R1, P2Fail, (1, 0), Occupation::R1, false),
        ];
        for (start, failure, pair, next, dead) in rows {
            let b = single_branch(start, failure);
            assert_eq!(b.pair(0), pair, "{start} {failure:?}");
            assert_eq!(b.occupation, next, "{start} {failure:?}");
            assert_eq!(b.dead, dead, "{start} {failure:?}");
        }
    }

    #[test]
    fn patch_failure_flips_pattern_to_late() {
        let mut s = prepare_initial(4).unwrap();
        s.iterate(&events(Failure::P1Fail)).unwrap();
        s.iterate(&events(Failure::None)).unwrap();
        s.iterate(&events(Failure::None)).unwrap();
        s.finish(Failure::None).unwrap();
        assert_eq!(s.branch_a.pattern().unwrap().to_string(), "ELLL");
        assert_eq!(s.branch_b.pattern().unwrap().to_string(), "LLLL");
    }

    #[test]
    fn final_rv1_failure_flips_last_late_qubit() {
        let mut s = prepare_initial(2).unwrap();
        s.iterate(&events(Failure::None)).unwrap();
        s.finish(Failure::Rv1Fail).unwrap();
        assert_eq!(s.branch_a.pattern().unwrap().to_string(), "EE");
        assert_eq!(s.branch_b.pattern().unwrap().to_string(), "LE");
    }

    #[test]
    fn dead_branch_stays_silent() {
        let mut s = prepare_initial(4).unwrap();
        s.iterate(&events(Failure::P2Fail)).unwrap();
        s.iterate(&events(Failure::Rv1Fail)).unwrap();
        s.iterate(&events(Failure::None)).unwrap();
        s.finish(Failure::Rv1Fail).unwrap();
        assert!(s.branch_b.dead);
        assert_eq!(s.branch_b.emission, vec![0, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.branch_a.pattern().unwrap().to_string(), "EEEE");
    }

    #[test]
    fn finalize_examples() {
        let s = finalize(&prepare_initial(1).unwrap()).unwrap();
        assert_eq!(s.branch_a.emission, vec![1, 0]);
        assert_eq!(s.branch_b.emission, vec![0, 1]);
        assert_eq!(s.branch_a.occupation, Occupation::EMPTY);
        assert!(s.is_complete());

        let mut s = prepare_initial(3).unwrap();
        s.iterate(&IterationEvents::default()).unwrap();
        s.iterate(&IterationEvents::default()).unwrap();
        let s = finalize(&s).unwrap();
        assert_eq!(s.branch_a.emission, vec![1, 0, 1, 0, 1, 0]);
        assert_eq!(s.branch_b.emission, vec![0, 1, 0, 1, 0, 1]);

        let mut s = prepare_initial(3).unwrap();
        s.iterate(&IterationEvents::default()).unwrap();
        assert!(matches!(finalize(&s), Err(crate::Error::InvalidState(_))));
    }

    #[test]
    fn iteration_after_completion_is_rejected() {
        let s = ideal_state(2).unwrap();
        assert!(matches!(
            run_iteration(&s, &IterationEvents::default()),
            Err(crate::Error::InvalidState(_))
        ));
        let s = prepare_initial(1).unwrap();
        assert!(run_iteration(&s, &IterationEvents::default()).is_err());
    }

    #[test]
    fn time_bin_mapping() {
        assert_eq!(to_time_bin(&[1, 0, 0, 1]).unwrap().to_string(), "EL");
        assert_eq!(to_time_bin(&[1, 0, 1, 0, 1, 0]).unwrap().to_string(), "EEE");
        assert_eq!(to_time_bin(&[1, 1, 0, 1]).unwrap().to_string(), "XL");
        assert!(matches!(to_time_bin(&[1, 0, 1]), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn ideal_state_patterns() {
        for (m, e, l) in [(1, "E", "L"), (2, "EE", "LL"), (6, "EEEEEE", "LLLLLL")] {
            let s = ideal_state(m).unwrap();
            assert_eq!(s.branch_a.pattern().unwrap().to_string(), e);
            assert_eq!(s.branch_b.pattern().unwrap().to_string(), l);
            assert!(s.is_error_free_pair());
        }
    }

    #[test]
    fn coherent_state_amplitudes() {
        let s = coherent_state(3, 0.6, 0.8).unwrap();
        assert!(s.is_error_free_pair());
        assert_eq!((s.branch_a.amplitude, s.branch_b.amplitude), (0.6, 0.8));
        assert!(coherent_state(3, 0.6, 0.6).is_err());
    }

    #[test]
    fn ideal_evolution_matches_ideal_state() {
        for m in 1..=12 {
            let mut s = prepare_initial(m).unwrap();
            for _ in 1..m {
                s = run_iteration(&s, &IterationEvents::default()).unwrap();
            }
            let s = finalize(&s).unwrap();
            assert_eq!(s, ideal_state(m).unwrap());
        }
    }
}
