//! Fidelity witness estimators, scaling fits, afterpulse correction and
//! internal-phase calibration.
//!
//! The fidelity to the ideal GHZ state splits into an eigen-basis part
//! `F_e` (population of `E^m` and `L^m`) and a superposition part
//! `F_s = (1/m) sum_i (-1)^i <M_i^{(x)m}>`, with `F = (F_e + F_s)/2`.
//! Error bars are first-order Poisson propagation on the coincidence
//! counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::measurement::{correlation_value, parity_sign, CoincidenceTable, SettingId, SettingKind};

/// A value with its one-sigma uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

impl Measured {
    pub fn new(value: f64, error: f64) -> Self {
        Measured { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Measured { value, error: 0.0 }
    }
}

/// Standard deviation of `count / total` under Poisson counting,
/// `sqrt(r (1 - r) / total)`.
pub fn poisson_error(count: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let r = (count / total).clamp(0.0, 1.0);
    (r * (1.0 - r) / total).sqrt()
}

/// `(c(E^m) + c(L^m)) / sum_o c(o)`.
pub fn eigen_fidelity(table: &CoincidenceTable) -> Result<Measured> {
    if table.kind() != SettingKind::Eigen {
        return Err(invalid_arg(format!("{} is not an eigen table", table.setting())));
    }
    let eff = table.effective_counts();
    let total: f64 = eff.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedValue("eigen table has no coincidences".into()));
    }
    let good = eff[0] + eff[eff.len() - 1];
    Ok(Measured::new(good / total, poisson_error(good, total)))
}

/// Parity correlation `<M_i^{(x)m}>` with error `sqrt((1 - c^2) / N)`.
pub fn correlation(table: &CoincidenceTable) -> Result<Measured> {
    let c = correlation_value(table)?;
    let n: f64 = table.effective_counts().iter().sum();
    Ok(Measured::new(c, ((1.0 - c * c).max(0.0) / n).sqrt()))
}

/// Alternating mean of the `m` parity correlations.
pub fn superposition_fidelity(m: usize, correlations: &[Measured]) -> Result<Measured> {
    if m == 0 || correlations.len() != m {
        return Err(invalid_arg(format!(
            "{} correlation values given, {m} expected",
            correlations.len()
        )));
    }
    let mf = m as f64;
    let value = correlations
        .iter()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { c.value } else { -c.value })
        .sum::<f64>()
        / mf;
    let error = correlations.iter().map(|c| c.error * c.error).sum::<f64>().sqrt() / mf;
    Ok(Measured::new(value, error))
}

pub fn total_fidelity(f_e: Measured, f_s: Measured) -> Result<Measured> {
    for (name, v) in [("F_e", f_e.value), ("F_s", f_s.value)] {
        if !(-1.0..=1.0).contains(&v) {
            return Err(invalid_arg(format!("{name} = {v} outside [-1, 1]")));
        }
    }
    Ok(Measured::new(
        0.5 * (f_e.value + f_s.value),
        0.5 * f_e.error.hypot(f_s.error),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub i: usize,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub m: usize,
    pub f_e: Measured,
    pub correlations: Vec<Correlation>,
    pub f_s: Measured,
    pub f: Measured,
    /// Whether the input tables carried afterpulse corrections.
    #[serde(default)]
    pub corrected: bool,
}

impl FidelityReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("invalid report JSON: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |m: &Measured| format!("{:.2}% +- {:.2}%", 100.0 * m.value, 100.0 * m.error);
        writeln!(
            s,
            "m = {}{}",
            self.m,
            if self.corrected { " (afterpulse corrected)" } else { "" }
        )
        .unwrap();
        writeln!(s, "F_e = {}", pct(&self.f_e)).unwrap();
        for c in &self.correlations {
            writeln!(s, "  <M_{}> = {:+.4} +- {:.4}", c.i, c.value, c.error).unwrap();
        }
        writeln!(s, "F_s = {}", pct(&self.f_s)).unwrap();
        writeln!(s, "F   = {}", pct(&self.f)).unwrap();
        s
    }
}

/// Builds the full report from one eigen table and the `m` superposition
/// tables `mi:0 .. mi:m-1`. For `m = 1` the eigen table may be omitted
/// (`F_e = 1`).
pub fn fidelity_report(tables: &[CoincidenceTable]) -> Result<FidelityReport> {
    let m = tables.first().ok_or_else(|| Error::Data("no tables given".into()))?.m();
    if let Some(t) = tables.iter().find(|t| t.m() != m) {
        return Err(Error::Data(format!(
            "inconsistent m: {} table has m = {}, expected {m}",
            t.setting(),
            t.m()
        )));
    }
    let find = |id: SettingId| -> Result<Option<&CoincidenceTable>> {
        let mut found = tables.iter().filter(|t| t.setting() == id);
        let first = found.next();
        if found.next().is_some() {
            return Err(Error::Data(format!("setting {id} given more than once")));
        }
        Ok(first)
    };
    let mut missing = Vec::new();
    let eigen = find(SettingId::Eigen)?;
    if eigen.is_none() && m > 1 {
        missing.push(SettingId::Eigen.to_string());
    }
    let mut sup = Vec::with_capacity(m);
    for i in 0..m {
        match find(SettingId::Mi(i))? {
            Some(t) => sup.push(t),
            None => missing.push(SettingId::Mi(i).to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!("missing settings: {}", missing.join(", "))));
    }
    let f_e = match eigen {
        Some(t) => eigen_fidelity(t)?,
        None => Measured::exact(1.0),
    };
    let measured: Vec<Measured> = sup.iter().map(|t| correlation(t)).collect::<Result<_>>()?;
    let f_s = superposition_fidelity(m, &measured)?;
    let f = total_fidelity(f_e, f_s)?;
    Ok(FidelityReport {
        m,
        f_e,
        correlations: measured
            .iter()
            .enumerate()
            .map(|(i, c)| Correlation {
                i,
                value: c.value,
                error: c.error,
            })
            .collect(),
        f_s,
        f,
        corrected: tables.iter().any(CoincidenceTable::has_corrections),
    })
}

/// Input of the scaling fit for one `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub m: usize,
    pub f_e: f64,
    pub f_s: f64,
    pub beta_phi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResidual {
    pub m: usize,
    /// `ln F_e - (m - 1) ln alpha`
    pub log_f_e: f64,
    /// `ln(F_s / (F_e beta_phi)) - m ln beta_res`
    pub log_f_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Per-photon decay of `F_e = alpha^(m-1)`.
    pub alpha: f64,
    /// Residual per-photon factor in `F_s = F_e beta_phi beta_res^m`.
    pub beta_res: f64,
    pub residuals: Vec<ScalingResidual>,
}

/// Unweighted least squares through the origin in log space.
pub fn fit_scaling(points: &[ScalingPoint]) -> Result<ScalingFit> {
    if points.len() < 2 {
        return Err(invalid_arg("scaling fit needs at least two points"));
    }
    for p in points {
        if !(p.f_e > 0.0 && p.f_s > 0.0 && p.beta_phi > 0.0) {
            return Err(invalid_arg(format!(
                "m = {}: fidelities and beta_phi must be positive (F_e = {}, F_s = {}, beta_phi = {})",
                p.m, p.f_e, p.f_s, p.beta_phi
            )));
        }
    }
    let (mut sxy, mut sxx, mut smy, mut smm) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.m as f64 - 1.0;
        let m = p.m as f64;
        sxy += x * p.f_e.ln();
        sxx += x * x;
        smy += m * (p.f_s / (p.f_e * p.beta_phi)).ln();
        smm += m * m;
    }
    if sxx == 0.0 {
        return Err(invalid_arg("scaling fit needs a point with m >= 2"));
    }
    let ln_alpha = sxy / sxx;
    let ln_beta = smy / smm;
    let residuals = points
        .iter()
        .map(|p| ScalingResidual {
            m: p.m,
            log_f_e: p.f_e.ln() - (p.m as f64 - 1.0) * ln_alpha,
            log_f_s: (p.f_s / (p.f_e * p.beta_phi)).ln() - p.m as f64 * ln_beta,
        })
        .collect();
    Ok(ScalingFit {
        alpha: ln_alpha.exp(),
        beta_res: ln_beta.exp(),
        residuals,
    })
}

/// Expected afterpulse contributions: a record that missed window `j`
/// becomes the full outcome `o` when the SPD that fired in window `j - 1`
/// afterpulses, which requires `o_j == o_{j-1}`. The expected number of such
/// fakes, `p_afterpulse * c(missing j)`, is stored as a correction and
/// subtracted by the estimators.
pub fn afterpulse_correct(table: &CoincidenceTable, p_afterpulse: f64) -> CoincidenceTable {
    let mut out = table.clone();
    if p_afterpulse == 0.0 {
        return out;
    }
    let m = table.m();
    for o in 0..(1u32 << m) {
        let mut expected = 0.0;
        for j in 1..m {
            let prev = o & (1 << (j - 1)) != 0;
            let cur = o & (1 << j) != 0;
            if prev == cur {
                expected += table.missing_one(j, o & !(1 << j)) as f64;
            }
        }
        if expected > 0.0 {
            out.set_correction(o, table.corrections()[o as usize] + p_afterpulse * expected);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalibration {
    /// Internal phase that maximises the even-parity weight, radians in
    /// `(-pi, pi]`.
    pub phi0: f64,
    pub phi0_error: f64,
    pub amplitude: f64,
    pub offset: f64,
}

/// Fits `A cos(phi - phi0) + B` to the even-parity fraction of angle-0
/// tables recorded at each set phase.
pub fn phase_calibration(sweep: &[(f64, CoincidenceTable)]) -> Result<PhaseCalibration> {
    if sweep.len() < 5 {
        return Err(invalid_arg(format!(
            "phase sweep needs >= 5 points, got {}",
            sweep.len()
        )));
    }
    let mut phases: Vec<f64> = sweep.iter().map(|(p, _)| p.rem_euclid(std::f64::consts::TAU)).collect();
    phases.sort_by(f64::total_cmp);
    let max_gap = phases
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(std::iter::once(
            phases[0] + std::f64::consts::TAU - phases[phases.len() - 1],
        ))
        .fold(0.0, f64::max);
    if max_gap > std::f64::consts::PI + 1e-9 {
        return Err(invalid_arg("phase sweep does not cover a full period"));
    }
    let mut points = Vec::with_capacity(sweep.len());
    for (phi, table) in sweep {
        if table.setting() != SettingId::Mi(0) {
            return Err(invalid_arg(format!(
                "calibration needs mi:0 tables, got {}",
                table.setting()
            )));
        }
        let p = table.normalized()?;
        let even: f64 = p
            .iter()
            .enumerate()
            .filter(|(o, _)| parity_sign(*o as u32) > 0.0)
            .map(|(_, v)| v)
            .sum();
        points.push((*phi, even));
    }
    // Normal equations for y = a cos(phi) + b sin(phi) + c.
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for &(phi, y) in &points {
        let row = [phi.cos(), phi.sin(), 1.0];
        for r in 0..3 {
            for c in 0..3 {
                xtx[r][c] += row[r] * row[c];
            }
            xty[r] += row[r] * y;
        }
    }
    let inv = invert3(&xtx).ok_or_else(|| Error::NoSignal("singular phase sweep".into()))?;
    let coef: Vec<f64> = (0..3).map(|r| (0..3).map(|c| inv[r][c] * xty[c]).sum()).collect();
    let (a, b, offset) = (coef[0], coef[1], coef[2]);
    let rss: f64 = points
        .iter()
        .map(|&(phi, y)| (y - a * phi.cos() - b * phi.sin() - offset).powi(2))
        .sum();
    let dof = (points.len() - 3) as f64;
    let s2 = rss / dof;
    let amplitude = a.hypot(b);
    let var_a = s2 * inv[0][0];
    let var_b = s2 * inv[1][1];
    let cov = s2 * inv[0][1];
    let amp_error = if amplitude > 0.0 {
        ((a * a * var_a + b * b * var_b + 2.0 * a * b * cov) / (amplitude * amplitude))
            .max(0.0)
            .sqrt()
    } else {
        0.0
    };
    if amplitude < 1e-12 || amplitude <= 3.0 * amp_error {
        return Err(Error::NoSignal(format!(
            "no parity oscillation in phase sweep (amplitude {amplitude:.3e} +- {amp_error:.1e})"
        )));
    }
    let phi0_error = ((b * b * var_a + a * a * var_b - 2.0 * a * b * cov).max(0.0)).sqrt() / (amplitude * amplitude);
    Ok(PhaseCalibration {
        phi0: b.atan2(a),
        phi0_error,
        amplitude,
        offset,
    })
}

#[allow(clippy::needless_range_loop)]
fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if det.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    Some(inv)
}
