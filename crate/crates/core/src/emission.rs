//! Single-atom decay with redshift and the timed Dicke states of an ensemble.
//!
//! Only the single-excitation sector is represented: a state is the array of
//! complex excitation amplitudes `c_j`, one per atom.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::metric::{redshift, WeakFieldMetric};
use crate::modes::{PerturbedMode, RealVec3};

/// Largest `Γ/ν` accepted for an atom.
pub const MAX_DECAY_RATIO: f64 = 1e-3;

/// `|a·F|` above which the curved state is flagged as leaving the linear regime.
pub const CORRECTION_WARNING: f64 = 0.1;

/// Stationary two-level atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub r: RealVec3,
    /// Transition angular frequency (1/s).
    pub nu: f64,
    /// Spontaneous decay rate (1/s).
    pub gamma: f64,
    /// Dipole moment (C·m).
    pub d: RealVec3,
}

impl Atom {
    pub fn new(r: RealVec3, nu: f64, gamma: f64, d: RealVec3) -> Result<Self> {
        let atom = Self { r, nu, gamma, d };
        atom.validate()?;
        Ok(atom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::Domain(format!(
                "transition frequency must be > 0, got {}",
                self.nu
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Domain(format!("decay rate must be > 0, got {}", self.gamma)));
        }
        if self.gamma >= MAX_DECAY_RATIO * self.nu {
            return Err(Error::Domain(format!(
                "decay rate {} is not small against the transition frequency {} (need Γ < {MAX_DECAY_RATIO}·ν)",
                self.gamma, self.nu
            )));
        }
        if self.r.iter().chain(self.d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("atom position and dipole must be finite".into()));
        }
        Ok(())
    }
}

/// Single-excitation amplitudes over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedDickeState {
    pub amplitudes: Vec<Complex64>,
    /// Wavevector of the absorbed photon (1/m).
    pub k0: RealVec3,
}

impl TimedDickeState {
    pub fn norm_sq(&self) -> f64 {
        compensated_sum(self.amplitudes.iter().map(|c| c.norm_sqr()))
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// Coefficients of `F{ζ} = βζ + iγζ²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FCorrectionParams {
    pub beta: f64,
    pub gamma_coef: f64,
}

impl FCorrectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.gamma_coef.is_finite()) {
            return Err(Error::Invalid("F-correction coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn value(&self, dz: f64) -> Complex64 {
        Complex64::new(self.beta * dz, self.gamma_coef * dz * dz)
    }
}

/// Neumaier summation; keeps unit-norm checks honest for large ensembles.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Coupling `−d·E_k(r)/ħ` at `t = 0`, in 1/s.
pub fn coupling_v(mode: &PerturbedMode, atom: &Atom) -> Result<Complex64> {
    let e = mode.electric_field(0.0, &atom.r)?;
    let hbar = mode.constants().hbar;
    let d_dot_e: Complex64 = (0..3).map(|i| e[i] * atom.d[i]).sum();
    Ok(-d_dot_e / hbar)
}

/// `c_j = e^{i k0·r_j}/√N`.
pub fn flat_timed_dicke(ensemble: &Ensemble, k0: &RealVec3) -> TimedDickeState {
    let scale = 1.0 / (ensemble.len() as f64).sqrt();
    let amplitudes = ensemble
        .positions()
        .iter()
        .map(|r| Complex64::from_polar(scale, k0.dot(r)))
        .collect();
    TimedDickeState { amplitudes, k0: *k0 }
}

/// Largest `|a·F{z_j − z0}|` over the ensemble.
pub fn max_abs_correction(ensemble: &Ensemble, metric: &WeakFieldMetric, f: &FCorrectionParams) -> Result<f64> {
    ensemble.positions().iter().try_fold(0.0_f64, |m, r| {
        let dz = metric.offset(r.z)?;
        Ok(m.max((f.value(dz) * metric.a).norm()))
    })
}

/// `c_j ∝ e^{i k0·r_j}(1 + a·F{z_j − z0})`, renormalized to unit norm.
pub fn curved_timed_dicke(
    ensemble: &Ensemble,
    k0: &RealVec3,
    metric: &WeakFieldMetric,
    f: &FCorrectionParams,
) -> Result<TimedDickeState> {
    metric.validate()?;
    f.validate()?;
    let max_corr = max_abs_correction(ensemble, metric, f)?;
    if max_corr >= CORRECTION_WARNING {
        warn!("|a·F| reaches {max_corr:.3e}; the curved timed Dicke state leaves the linear regime");
    }
    let raw: Vec<Complex64> = ensemble
        .positions()
        .iter()
        .map(|r| {
            let dz = r.z - metric.z0;
            Complex64::from_polar(1.0, k0.dot(r)) * (Complex64::new(1.0, 0.0) + f.value(dz) * metric.a)
        })
        .collect();
    let norm = compensated_sum(raw.iter().map(|c| c.norm_sqr())).sqrt();
    let amplitudes = raw.into_iter().map(|c| c / norm).collect();
    Ok(TimedDickeState { amplitudes, k0: *k0 })
}

/// Markovian excited-state amplitude `e^{−Γt/2}`.
pub fn single_atom_survival(t: f64, gamma: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain(format!("decay rate must be > 0, got {gamma}")));
    }
    Ok((-0.5 * gamma * t).exp())
}

/// Lab-frame amplitude of photon mode `k′` for an atom at `z_at`, observed from `z_lab`.
///
/// `v·(1 − (a/2)(z_at − z_lab)) / (ω[Z − z_at] − ν − iΓ/2)`, with `Z` the mode-set reference height.
pub fn modal_amplitude_lab(
    mode: &PerturbedMode,
    atom: &Atom,
    z_mode: f64,
    z_lab: f64,
    metric: &WeakFieldMetric,
) -> Result<Complex64> {
    atom.validate()?;
    let v = coupling_v(mode, atom)?;
    modal_amplitude_lab_with(v, mode.omega(), atom, z_mode, z_lab, metric)
}

/// [`modal_amplitude_lab`] for an explicit coupling and mode frequency.
pub fn modal_amplitude_lab_with(
    v: Complex64,
    omega: f64,
    atom: &Atom,
    z_mode: f64,
    z_lab: f64,
    metric: &WeakFieldMetric,
) -> Result<Complex64> {
    let a = metric.a;
    let z_at = atom.r.z;
    check_pair(a, z_mode - z_at)?;
    check_pair(a, z_at - z_lab)?;
    let dilation = 1.0 - 0.5 * a * (z_at - z_lab);
    let denom = Complex64::new(redshift(omega, z_mode - z_at, a) - atom.nu, -0.5 * atom.gamma);
    Ok(v * dilation / denom)
}

/// The same amplitude obtained with every frequency referred to `z_lab` directly:
/// `v / (ω[Z − z_lab] − ν[z_at − z_lab] − iΓ[z_at − z_lab]/2)`.
pub fn modal_amplitude_nonlocal(
    v: Complex64,
    omega: f64,
    atom: &Atom,
    z_mode: f64,
    z_lab: f64,
    metric: &WeakFieldMetric,
) -> Result<Complex64> {
    let a = metric.a;
    let dz_at = atom.r.z - z_lab;
    check_pair(a, z_mode - z_lab)?;
    check_pair(a, dz_at)?;
    let denom = Complex64::new(
        redshift(omega, z_mode - z_lab, a) - redshift(atom.nu, dz_at, a),
        -0.5 * redshift(atom.gamma, dz_at, a),
    );
    Ok(v / denom)
}

fn check_pair(a: f64, dz: f64) -> Result<()> {
    let value = (a * dz).abs();
    if value >= crate::metric::LINEARIZATION_LIMIT {
        return Err(Error::Linearization {
            value,
            limit: crate::metric::LINEARIZATION_LIMIT,
        });
    }
    Ok(())
}
