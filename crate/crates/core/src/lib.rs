//! Simulation and estimation toolkit for sequential multiphoton GHZ
//! generation from a two-level Rydberg superatom.
//!
//! The crate is organised along the data flow of an experiment:
//!
//! * [`protocol`] evolves the two emission branches of a trajectory through
//!   the retrieve/patch iterations and converts photon-number modes into
//!   time-bin qubits.
//! * [`channels`] samples the per-iteration failure events and models the
//!   detection chain (loss, dark counts, afterpulses, accumulated
//!   components).
//! * [`phase`] samples and characterises the relative phase noise.
//! * [`measurement`] turns a finished trajectory into outcome probabilities
//!   or sampled detection outcomes and tabulates coincidences.
//! * [`estimation`] implements the fidelity witness, Poisson error bars,
//!   scaling fits, afterpulse correction and phase calibration.
//! * [`oracle`] computes exact reference distributions by enumeration.
//! * [`sim`] runs seeded, parallel trajectory campaigns.
//! * [`config`] holds the campaign configuration and its file format.

pub mod channels;
pub mod config;
pub mod error;
pub mod estimation;
pub mod measurement;
pub mod oracle;
pub mod phase;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
