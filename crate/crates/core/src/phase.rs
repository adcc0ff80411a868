//! Relative-phase noise between the `E^m` and `L^m` branches.
//!
//! The interferometer lock contributes one collective offset that every
//! qubit picks up (`m * X`), while laser phase noise is independent per
//! qubit (`sum Y_j`). Configuration uses degrees; everything returned here
//! is in radians.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// Measured components of the laser phase noise (795 nm, 474 nm), degrees.
pub const LASER_COMPONENTS_DEG: [f64; 2] = [4.8, 12.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseNoiseParams {
    /// Per-qubit laser phase noise, degrees.
    pub sigma_laser: f64,
    /// Collective interferometer phase noise, degrees.
    pub sigma_inter: f64,
    /// Optional breakdown of `sigma_laser`, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_laser_components: Option<[f64; 2]>,
}

impl Default for PhaseNoiseParams {
    fn default() -> Self {
        PhaseNoiseParams {
            sigma_laser: 13.0,
            sigma_inter: 7.4,
            sigma_laser_components: None,
        }
    }
}

impl PhaseNoiseParams {
    pub fn none() -> Self {
        PhaseNoiseParams {
            sigma_laser: 0.0,
            sigma_inter: 0.0,
            sigma_laser_components: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_laser >= 0.0 && self.sigma_inter >= 0.0) {
            return Err(invalid_arg("phase noise standard deviations must be >= 0"));
        }
        if let Some(c) = self.sigma_laser_components {
            if c.iter().any(|s| s.is_nan() || *s < 0.0) {
                return Err(invalid_arg("laser noise components must be >= 0"));
            }
            // The measured components add up to 12.9 deg against the quoted
            // 13 deg, so allow a small relative mismatch.
            let combined = c[0].hypot(c[1]);
            if (combined - self.sigma_laser).abs() > 0.02 * self.sigma_laser.max(1e-9) {
                return Err(invalid_arg(format!(
                    "laser noise components combine to {combined:.3} deg, expected {}",
                    self.sigma_laser
                )));
            }
        }
        Ok(())
    }

    pub fn sigma_laser_rad(&self) -> f64 {
        self.sigma_laser.to_radians()
    }

    pub fn sigma_inter_rad(&self) -> f64 {
        self.sigma_inter.to_radians()
    }

    /// Standard deviation of the sampled offset for `m` qubits, radians.
    pub fn total_sigma(&self, m: usize) -> f64 {
        let m = m as f64;
        (m * self.sigma_laser_rad().powi(2) + m * m * self.sigma_inter_rad().powi(2)).sqrt()
    }
}

/// Draws `m * X + sum_j Y_j` with `X ~ N(0, sigma_inter)` and
/// `Y_j ~ N(0, sigma_laser)`.
pub fn sample_phase_offset<R: Rng + ?Sized>(m: usize, params: &PhaseNoiseParams, rng: &mut R) -> Result<f64> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    let inter = Normal::new(0.0, params.sigma_inter_rad()).map_err(|e| invalid_arg(e.to_string()))?;
    let laser = Normal::new(0.0, params.sigma_laser_rad()).map_err(|e| invalid_arg(e.to_string()))?;
    let mut phi = m as f64 * inter.sample(rng);
    for _ in 0..m {
        phi += laser.sample(rng);
    }
    Ok(phi)
}

/// `E[cos phi]` for `phi ~ N(0, sigma_r)`: `exp(-sigma_r^2 / 2)`.
pub fn dephasing_factor(sigma_r: f64) -> Result<f64> {
    if sigma_r.is_nan() || sigma_r < 0.0 {
        return Err(invalid_arg(format!("sigma_r = {sigma_r} must be >= 0")));
    }
    Ok((-0.5 * sigma_r * sigma_r).exp())
}

/// Visibility reduction of an `m`-qubit state:
/// `beta_inter^(m^2) * beta_laser^m`.
pub fn beta_phi(m: usize, params: &PhaseNoiseParams) -> Result<f64> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    let inter = dephasing_factor(params.sigma_inter_rad())?;
    let laser = dephasing_factor(params.sigma_laser_rad())?;
    Ok(inter.powi((m * m) as i32) * laser.powi(m as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_gives_zero_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in 1..=6 {
            assert_eq!(
                sample_phase_offset(m, &PhaseNoiseParams::none(), &mut rng).unwrap(),
                0.0
            );
            assert_eq!(beta_phi(m, &PhaseNoiseParams::none()).unwrap(), 1.0);
        }
    }

    #[test]
    fn offset_spread_matches_gaussian_sum() {
        let p = PhaseNoiseParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (m, expected_deg) in [(1, 14.97), (6, 54.6)] {
            let n = 200_000;
            let var = (0..n)
                .map(|_| sample_phase_offset(m, &p, &mut rng).unwrap().powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt().to_degrees();
            // Relative standard error of a sample sd is 1/sqrt(2n).
            let tol = 3.0 * expected_deg / (2.0 * n as f64).sqrt();
            assert!((sd - expected_deg).abs() < tol + 0.05, "m={m}: {sd}");
            assert!((p.total_sigma(m).to_degrees() - expected_deg).abs() < 0.05);
        }
    }

    #[test]
    fn dephasing_values() {
        assert_eq!(dephasing_factor(0.0).unwrap(), 1.0);
        assert!((dephasing_factor(13f64.to_radians()).unwrap() - 0.9746).abs() < 1e-4);
        assert!((dephasing_factor(7.4f64.to_radians()).unwrap() - 0.9917).abs() < 1e-4);
        assert!(dephasing_factor(-0.1).is_err());
    }

    #[test]
    fn beta_phi_values() {
        let p = PhaseNoiseParams::default();
        assert!((beta_phi(1, &p).unwrap() - 0.9665).abs() < 1e-3);
        assert!((beta_phi(2, &p).unwrap() - 0.919).abs() < 1e-3);
        assert!(beta_phi(0, &p).is_err());
    }

    #[test]
    fn component_consistency() {
        let mut p = PhaseNoiseParams {
            sigma_laser_components: Some(LASER_COMPONENTS_DEG),
            ..PhaseNoiseParams::default()
        };
        p.validate().unwrap();
        p.sigma_laser_components = Some([1.0, 1.0]);
        assert!(p.validate().is_err());
        assert!(PhaseNoiseParams {
            sigma_inter: -1.0,
            ..PhaseNoiseParams::default()
        }
        .validate()
        .is_err());
    }
}
