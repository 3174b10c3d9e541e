//! Physical constants and the linearized Schwarzschild background.
//!
//! Near a reference height `z0` the weak-field metric reads
//!
//! ```text
//! ds² = (1 + a(z − z0)) c² dt² − (dx² + dy² + (1 − a(z − z0)) dz²),   a = 2g/c²
//! ```
//!
//! Every gravitational correction in this crate is first order in `a`. Heights
//! are absolute coordinates; offsets are always taken relative to `z0`.
//!
//! Realistic values (`a ≈ 2e-16 1/m`) make O(a²) effects invisible in double
//! precision, so all operations are equally valid in a scaled regime where
//! `c = ħ = ε0 = 1` and `a`, `ν`, `Γ` are of order one (see
//! [`PhysicalConstants::scaled`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible `|a·Δz|` before the first-order expansion is rejected.
pub const LINEARIZATION_LIMIT: f64 = 1.0;

/// Evaluation heights must exceed this multiple of the Schwarzschild radius.
pub const WEAK_FIELD_MARGIN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Speed of light (m/s).
    pub c: f64,
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
    /// Newtonian gravitational constant (m³/(kg·s²)).
    pub g_newton: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::si()
    }
}

impl PhysicalConstants {
    /// CODATA 2018 SI values.
    pub const fn si() -> Self {
        Self {
            c: 299_792_458.0,
            hbar: 1.054_571_817e-34,
            eps0: 8.854_187_812_8e-12,
            g_newton: 6.674_30e-11,
        }
    }

    /// Natural units with every constant set to one.
    pub const fn scaled() -> Self {
        Self {
            c: 1.0,
            hbar: 1.0,
            eps0: 1.0,
            g_newton: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c", self.c),
            ("hbar", self.hbar),
            ("eps0", self.eps0),
            ("g_newton", self.g_newton),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!(
                    "constant {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Linearized gravity background around the reference height `z0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakFieldMetric {
    /// Gravity-gradient parameter `2g/c²` (1/m).
    pub a: f64,
    /// Reference height (m).
    pub z0: f64,
    /// Schwarzschild radius (m), only needed for `h(z)` diagnostics.
    pub r_s: Option<f64>,
}

impl WeakFieldMetric {
    pub fn new(a: f64, z0: f64) -> Result<Self> {
        let metric = Self { a, z0, r_s: None };
        metric.validate()?;
        Ok(metric)
    }

    pub fn flat() -> Self {
        Self {
            a: 0.0,
            z0: 0.0,
            r_s: None,
        }
    }

    pub fn with_schwarzschild_radius(mut self, r_s: f64) -> Result<Self> {
        if !(r_s.is_finite() && r_s >= 0.0) {
            return Err(Error::Domain(format!(
                "Schwarzschild radius must be non-negative, got {r_s}"
            )));
        }
        self.r_s = Some(r_s);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::Domain(format!(
                "metric parameter a must be >= 0, got {}",
                self.a
            )));
        }
        if !self.z0.is_finite() {
            return Err(Error::Domain("reference height z0 must be finite".into()));
        }
        Ok(())
    }

    /// Returns `z − z0` after checking `|a(z − z0)| < 1`.
    pub fn offset(&self, z: f64) -> Result<f64> {
        let dz = z - self.z0;
        check_linear(self.a * dz)?;
        Ok(dz)
    }

    /// `h(z) = 1 − r_s/z`, enforcing `z > 100·r_s` when a radius is set.
    pub fn h_factor(&self, z: f64) -> Result<f64> {
        let r_s = self
            .r_s
            .ok_or_else(|| Error::Invalid("metric has no Schwarzschild radius".into()))?;
        if z <= WEAK_FIELD_MARGIN * r_s {
            return Err(Error::Domain(format!(
                "height {z} is not far outside the Schwarzschild radius {r_s}"
            )));
        }
        h_factor(z, r_s)
    }
}

pub(crate) fn check_linear(value: f64) -> Result<()> {
    if !(value.abs() < LINEARIZATION_LIMIT) {
        return Err(Error::Linearization {
            value: value.abs(),
            limit: LINEARIZATION_LIMIT,
        });
    }
    Ok(())
}

/// `a = 2g/c²` for a free-fall acceleration `g`.
pub fn surface_param_a(g: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(g.is_finite() && g >= 0.0) {
        return Err(Error::Domain(format!("free-fall acceleration must be >= 0, got {g}")));
    }
    Ok(2.0 * g / (constants.c * constants.c))
}

/// `h(z) = 1 − r_s/z` of the Schwarzschild metric.
pub fn h_factor(z: f64, r_s: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("radial coordinate must be > 0, got {z}")));
    }
    Ok(1.0 - r_s / z)
}

/// Redshift bracket `x[z] = x(1 + az/2)`, applied alike to `ω_k`, `ν` and `Γ`.
pub fn redshift(x: f64, z: f64, a: f64) -> f64 {
    x * (1.0 + 0.5 * a * z)
}

/// `x[z] − x` computed without subtracting two nearly equal numbers.
pub fn redshift_offset(x: f64, z: f64, a: f64) -> f64 {
    0.5 * x * a * z
}

/// `L³(1 − (a/2)(Z − z0))`: proper volume of a cube of edge `L` centred at `Z`.
pub fn quantization_volume(edge: f64, center: f64, metric: &WeakFieldMetric) -> Result<f64> {
    if !(edge > 0.0) {
        return Err(Error::Domain(format!("box edge must be > 0, got {edge}")));
    }
    let dz = metric.offset(center)?;
    Ok(edge.powi(3) * (1.0 - 0.5 * metric.a * dz))
}

/// Prefactor `1 + (a/2)(Z − z0)` multiplying `V0/(2π)³ ∫d³k` in the mode sum.
pub fn momentum_measure_factor(center: f64, metric: &WeakFieldMetric) -> Result<f64> {
    let dz = metric.offset(center)?;
    Ok(1.0 + 0.5 * metric.a * dz)
}

/// Transfers a duration measured by a clock at `z_at` to a clock at `z`.
pub fn proper_time_shift(t: f64, z_at: f64, z: f64, a: f64) -> f64 {
    t * (1.0 + 0.5 * a * (z_at - z))
}
