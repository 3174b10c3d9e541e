//! Electromagnetic eigenmodes perturbed to first order by the weak-field metric.
//!
//! A flat plane wave with wavevector `k` and polarization `f⁰(k, s)` acquires
//! height-dependent corrections, with `ζ = z − z0`, `K⊥ = kx² + ky²`:
//!
//! ```text
//! α(z)  = α0 (1 + aζ K⊥/(4kz²)),                 α0 = √(ħω/(2ε0 V0))
//! Θ     = ω t − k·r + a (K⊥ + 2kz²)/(4kz) ζ²
//! k̃_μ   = ∂_μ Θ = (c|k|, −kx, −ky, −kz + a (K⊥ + 2kz²)/(2kz) ζ)
//! f1    = f⁰1 + (aζ/2)(kx/kz) f⁰3,   f2 = f⁰2 + (aζ/2)(ky/kz) f⁰3,   f3 = f⁰3
//! pʲ    = −(1 + aζ) (k̃ × f)ʲ / |k|
//! ```
//!
//! The same corrections written as `E_j ∝ f⁰_j (1 + a M_j(z))` carry the
//! integration constants `C1 = C2 = 0`, `C3 = −i K⊥/(4kz³)`. The constant `C3`
//! is proportional to the wavelength and is dropped from the geometrical-optics
//! polarization `f`, but it is required for Gauss's law to hold at first order;
//! [`FieldForm::Expanded`] keeps it.
//!
//! Every correction carries a `1/kz` pole, so modes with `|kz| < k_eps·|k|` are
//! rejected.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metric::{PhysicalConstants, WeakFieldMetric};

pub type RealVec3 = Vector3<f64>;
pub type ComplexVec3 = Vector3<Complex64>;

pub const DEFAULT_KZ_GUARD: f64 = 1e-6;

/// A flat polarization component below this magnitude counts as zero.
const VANISHING_COMPONENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Polarization {
    S1,
    S2,
}

impl Polarization {
    pub fn from_label(s: u8) -> Result<Self> {
        match s {
            1 => Ok(Self::S1),
            2 => Ok(Self::S2),
            _ => Err(Error::Domain(format!("polarization label must be 1 or 2, got {s}"))),
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Self::S1 => 1,
            Self::S2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeIndex {
    k: RealVec3,
    s: Polarization,
}

impl ModeIndex {
    pub fn new(k: RealVec3, s: Polarization) -> Result<Self> {
        Self::with_guard(k, s, DEFAULT_KZ_GUARD)
    }

    pub fn with_guard(k: RealVec3, s: Polarization, k_eps: f64) -> Result<Self> {
        let norm = k.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Domain("wavevector must be non-zero and finite".into()));
        }
        if !(k.z.abs() > k_eps * norm) {
            return Err(Error::Domain(format!(
                "|kz| = {:.3e} is below the guard {k_eps:.1e}·|k|; kz = 0 modes are not supported",
                k.z.abs()
            )));
        }
        Ok(Self { k, s })
    }

    pub fn k(&self) -> RealVec3 {
        self.k
    }

    pub fn polarization(&self) -> Polarization {
        self.s
    }
}

/// Orthonormal real pair perpendicular to `k`.
///
/// `f⁰1 ∝ ẑ × k` (or `x̂` when `k ∥ ẑ`), `f⁰2 = k̂ × f⁰1`.
pub fn flat_polarization_basis(k: &RealVec3) -> Result<[RealVec3; 2]> {
    let norm = k.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Domain("polarization basis needs a non-zero wavevector".into()));
    }
    let khat = k / norm;
    let zk = Vector3::z().cross(&khat);
    let f1 = if zk.norm() > 1e-12 {
        zk.normalize()
    } else {
        Vector3::x()
    };
    let f2 = khat.cross(&f1);
    Ok([f1, f2])
}

/// Which first-order correction terms the `1 + aM_j` field keeps.
///
/// Switching a term off is an ablation: the field then fails the Maxwell system
/// (or Gauss's law) already at first order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionTerms {
    pub amplitude: bool,
    pub phase: bool,
    pub polarization: bool,
    pub gauss_constant: bool,
}

impl CorrectionTerms {
    pub const ALL: Self = Self {
        amplitude: true,
        phase: true,
        polarization: true,
        gauss_constant: true,
    };

    pub fn without_gauss_constant() -> Self {
        Self {
            gauss_constant: false,
            ..Self::ALL
        }
    }
}

impl Default for CorrectionTerms {
    fn default() -> Self {
        Self::ALL
    }
}

/// How the electric eigenmode is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldForm {
    /// `α(z) f(z) exp(iΘ)`: geometrical optics, no `C3`.
    Eikonal,
    /// `α0 exp(iΘ0) f⁰_j (1 + a M_j(z))` with the selected terms.
    Expanded(CorrectionTerms),
}

/// `M_j(z)`, or `f⁰_j M_j(z)` when the flat component vanishes and the ratio is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Relative(Complex64),
    Weighted(Complex64),
}

impl Perturbation {
    pub fn value(self) -> Complex64 {
        match self {
            Self::Relative(v) | Self::Weighted(v) => v,
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Self::Weighted(_))
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedMode {
    index: ModeIndex,
    metric: WeakFieldMetric,
    constants: PhysicalConstants,
    v0: f64,
    basis: [RealVec3; 2],
}

impl PerturbedMode {
    pub fn new(index: ModeIndex, metric: WeakFieldMetric, constants: PhysicalConstants, v0: f64) -> Result<Self> {
        metric.validate()?;
        constants.validate()?;
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::Domain(format!("quantization volume must be > 0, got {v0}")));
        }
        let basis = flat_polarization_basis(&index.k)?;
        Ok(Self {
            index,
            metric,
            constants,
            v0,
            basis,
        })
    }

    /// Same mode in a different background; used for `a`-scaling studies.
    pub fn with_metric(&self, metric: WeakFieldMetric) -> Self {
        Self { metric, ..self.clone() }
    }

    pub fn index(&self) -> &ModeIndex {
        &self.index
    }

    pub fn metric(&self) -> &WeakFieldMetric {
        &self.metric
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn volume(&self) -> f64 {
        self.v0
    }

    pub fn flat_basis(&self) -> &[RealVec3; 2] {
        &self.basis
    }

    pub fn k(&self) -> RealVec3 {
        self.index.k
    }

    /// Flat polarization `f⁰(k, s)` of this mode.
    pub fn flat_polarization(&self) -> RealVec3 {
        match self.index.s {
            Polarization::S1 => self.basis[0],
            Polarization::S2 => self.basis[1],
        }
    }

    /// `ω_k = c|k|`.
    pub fn omega(&self) -> f64 {
        self.constants.c * self.index.k.norm()
    }

    /// Flat normalization `√(ħω/(2ε0V0))`.
    pub fn flat_amplitude(&self) -> f64 {
        (self.constants.hbar * self.omega() / (2.0 * self.constants.eps0 * self.v0)).sqrt()
    }

    fn k_perp_sq(&self) -> f64 {
        let k = self.index.k;
        k.x * k.x + k.y * k.y
    }

    /// `(K⊥ + 2kz²)/(4kz)`, the curvature of the height-dependent phase.
    fn phase_curvature(&self) -> f64 {
        let kz = self.index.k.z;
        (self.k_perp_sq() + 2.0 * kz * kz) / (4.0 * kz)
    }

    fn offset(&self, z: f64) -> Result<f64> {
        self.metric.offset(z)
    }

    pub fn amplitude(&self, z: f64) -> Result<f64> {
        let dz = self.offset(z)?;
        let kz = self.index.k.z;
        Ok(self.flat_amplitude() * (1.0 + self.metric.a * dz * self.k_perp_sq() / (4.0 * kz * kz)))
    }

    /// Flat plane-wave phase `ω t − k·r`.
    pub fn flat_phase(&self, t: f64, r: &RealVec3) -> f64 {
        self.omega() * t - self.index.k.dot(r)
    }

    pub fn phase(&self, t: f64, r: &RealVec3) -> Result<f64> {
        let dz = self.offset(r.z)?;
        Ok(self.flat_phase(t, r) + self.metric.a * self.phase_curvature() * dz * dz)
    }

    /// Covariant local wave 4-vector `(c|k|, k̃x, k̃y, k̃z)`.
    pub fn local_wavevector(&self, z: f64) -> Result<[f64; 4]> {
        let dz = self.offset(z)?;
        let k = self.index.k;
        let kz_local = -k.z + 2.0 * self.metric.a * self.phase_curvature() * dz;
        Ok([self.omega(), -k.x, -k.y, kz_local])
    }

    fn spatial_wavevector(&self, z: f64) -> Result<RealVec3> {
        let [_, x, y, z] = self.local_wavevector(z)?;
        Ok(Vector3::new(x, y, z))
    }

    /// Integration constant `C_j` fixed by Gauss's law.
    pub fn gauss_constant(&self, j: usize) -> Complex64 {
        match j {
            3 => {
                let kz = self.index.k.z;
                Complex64::new(0.0, -self.k_perp_sq() / (4.0 * kz * kz * kz))
            }
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Part of `M_j` shared by all components: amplitude (real) and phase (imaginary).
    fn common_perturbation(&self, dz: f64, terms: &CorrectionTerms) -> Complex64 {
        let kz = self.index.k.z;
        let re = if terms.amplitude {
            dz * self.k_perp_sq() / (4.0 * kz * kz)
        } else {
            0.0
        };
        let im = if terms.phase {
            dz * dz * self.phase_curvature()
        } else {
            0.0
        };
        Complex64::new(re, im)
    }

    /// Coupling term `(k_j/(2kz)) ζ f⁰3` that tilts the transverse components.
    fn polarization_tilt(&self, j: usize, dz: f64) -> f64 {
        let k = self.index.k;
        let f3 = self.flat_polarization().z;
        match j {
            1 => k.x / (2.0 * k.z) * dz * f3,
            2 => k.y / (2.0 * k.z) * dz * f3,
            _ => 0.0,
        }
    }

    /// `f⁰_j M_j(z)` with the selected terms; defined even when `f⁰_j = 0`.
    pub fn weighted_perturbation(&self, j: usize, z: f64, terms: &CorrectionTerms) -> Result<Complex64> {
        check_axis(j)?;
        let dz = self.offset(z)?;
        let f0 = self.flat_polarization()[j - 1];
        let mut m = self.common_perturbation(dz, terms);
        if terms.gauss_constant {
            m += self.gauss_constant(j);
        }
        let tilt = if terms.polarization {
            self.polarization_tilt(j, dz)
        } else {
            0.0
        };
        Ok(m * f0 + tilt)
    }

    /// Full complex `M_j(z)` including `C_j`.
    ///
    /// For `j ∈ {1, 2}` the polarization term divides by `f⁰_j`; when that
    /// component vanishes the weighted product `f⁰_j M_j` is returned instead.
    pub fn perturbation_m(&self, j: usize, z: f64) -> Result<Perturbation> {
        check_axis(j)?;
        let dz = self.offset(z)?;
        let terms = CorrectionTerms::ALL;
        let f0 = self.flat_polarization()[j - 1];
        let m = self.common_perturbation(dz, &terms) + self.gauss_constant(j);
        if j == 3 {
            return Ok(Perturbation::Relative(m));
        }
        if f0.abs() < VANISHING_COMPONENT {
            log::debug!("f0_{j} vanishes for k = {:?}; returning f0·M", self.index.k);
            return Ok(Perturbation::Weighted(self.weighted_perturbation(j, z, &terms)?));
        }
        Ok(Perturbation::Relative(m + self.polarization_tilt(j, dz) / f0))
    }

    /// Covariant polarization `f_j(z)` in the geometrical-optics approximation.
    pub fn polarization_e(&self, z: f64) -> Result<RealVec3> {
        let dz = self.offset(z)?;
        let f0 = self.flat_polarization();
        let k = self.index.k;
        let tilt = 0.5 * self.metric.a * dz / k.z * f0.z;
        Ok(Vector3::new(f0.x + tilt * k.x, f0.y + tilt * k.y, f0.z))
    }

    /// Contravariant magnetic polarization `pʲ = εʲˡⁿ k̃_l f_n / √(−k̃ᵐk̃_m)`, first order in `a`.
    pub fn polarization_h(&self, z: f64) -> Result<RealVec3> {
        let dz = self.offset(z)?;
        let kt = self.spatial_wavevector(z)?;
        let f = self.polarization_e(z)?;
        let h = 1.0 + self.metric.a * dz;
        Ok(-h * kt.cross(&f) / self.index.k.norm())
    }

    /// Negative-frequency eigenmode `α(z) f(z) exp(iΘ)` per unit modal amplitude.
    pub fn electric_field(&self, t: f64, r: &RealVec3) -> Result<ComplexVec3> {
        let scale = self.amplitude(r.z)?;
        let f = self.polarization_e(r.z)?;
        let phase = Complex64::from_polar(scale, self.phase(t, r)?);
        Ok(f.map(|c| phase * c))
    }

    /// Eigenmode written as `α0 exp(iΘ0) f⁰_j (1 + a M_j)`.
    pub fn electric_field_expanded(&self, t: f64, r: &RealVec3, terms: &CorrectionTerms) -> Result<ComplexVec3> {
        let carrier = Complex64::from_polar(self.flat_amplitude(), self.flat_phase(t, r));
        let f0 = self.flat_polarization();
        let a = self.metric.a;
        let mut out = Vector3::zeros();
        for j in 1..=3 {
            let w = self.weighted_perturbation(j, r.z, terms)?;
            out[j - 1] = carrier * (f0[j - 1] + a * w);
        }
        Ok(out)
    }

    pub fn field(&self, form: FieldForm, t: f64, r: &RealVec3) -> Result<ComplexVec3> {
        match form {
            FieldForm::Eikonal => self.electric_field(t, r),
            FieldForm::Expanded(terms) => self.electric_field_expanded(t, r, &terms),
        }
    }
}

fn check_axis(j: usize) -> Result<()> {
    if !(1..=3).contains(&j) {
        return Err(Error::Domain(format!("axis index must be 1, 2 or 3, got {j}")));
    }
    Ok(())
}

/// One row of the cross-implementation test-vector table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModeTestVector {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
    pub s: u8,
    pub a: f64,
    pub z: f64,
    pub alpha: f64,
    pub theta: f64,
    pub kt_z: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl ModeTestVector {
    /// Evaluates the mode on the axis `x = y = 0` at `t = 0`.
    pub fn evaluate(mode: &PerturbedMode, z: f64) -> Result<Self> {
        let k = mode.k();
        let f = mode.polarization_e(z)?;
        let p = mode.polarization_h(z)?;
        Ok(Self {
            kx: k.x,
            ky: k.y,
            kz: k.z,
            s: mode.index().polarization().label(),
            a: mode.metric().a,
            z,
            alpha: mode.amplitude(z)?,
            theta: mode.phase(0.0, &Vector3::new(0.0, 0.0, z))?,
            kt_z: mode.local_wavevector(z)?[3],
            f1: f.x,
            f2: f.y,
            f3: f.z,
            p1: p.x,
            p2: p.y,
            p3: p.z,
        })
    }
}

pub fn write_test_vectors<W: std::io::Write>(rows: &[ModeTestVector], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
