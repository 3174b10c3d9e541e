//! Finite-difference verification of the perturbed eigenmodes.
//!
//! The linearized wave equations for the covariant field, with `ζ = z − z0`:
//!
//! ```text
//! (1 − aζ) ∂tt Ex/c² − ∂xx Ex − ∂yy Ex − (1 + aζ) ∂zz Ex − a ∂z Ex + a ∂x Ez = 0
//! (1 − aζ) ∂tt Ey/c² − ∂xx Ey − ∂yy Ey − (1 + aζ) ∂zz Ey − a ∂z Ey + a ∂y Ez = 0
//! ∂tt Ez/c² − (1 + aζ)(∂xx + ∂yy) Ez − (1 + 2aζ) ∂zz Ez − a ∂z Ez = 0
//! ∂x Ex + ∂y Ey + (1 + aζ) ∂z Ez = 0
//! ```
//!
//! A first-order solution leaves an O(a²) remainder. Each report evaluates the
//! residuals at step `h` and `h/2` and combines them by Richardson
//! extrapolation; the difference is kept as the discretization estimate so the
//! stencil error is never read as physics.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{ComplexVec3, FieldForm, PerturbedMode, RealVec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilSpec {
    pub h_t: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub h_z: f64,
    /// Central-difference order, 2 or 4.
    pub order: u8,
}

impl StencilSpec {
    pub fn uniform(h: f64, order: u8) -> Result<Self> {
        let s = Self {
            h_t: h,
            h_x: h,
            h_y: h,
            h_z: h,
            order,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for h in [self.h_t, self.h_x, self.h_y, self.h_z] {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Invalid(format!("stencil steps must be > 0, got {h}")));
            }
        }
        if self.order != 2 && self.order != 4 {
            return Err(Error::Invalid(format!(
                "stencil order must be 2 or 4, got {}",
                self.order
            )));
        }
        Ok(())
    }

    fn halved(&self) -> Self {
        Self {
            h_t: 0.5 * self.h_t,
            h_x: 0.5 * self.h_x,
            h_y: 0.5 * self.h_y,
            h_z: 0.5 * self.h_z,
            order: self.order,
        }
    }

    /// `2^p − 1`, the Richardson denominator.
    fn richardson_factor(&self) -> f64 {
        f64::from(1u32 << self.order) - 1.0
    }
}

impl Default for StencilSpec {
    fn default() -> Self {
        Self {
            h_t: 5e-3,
            h_x: 5e-3,
            h_y: 5e-3,
            h_z: 5e-3,
            order: 4,
        }
    }
}

/// Space-time evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub t: f64,
    pub r: [f64; 3],
}

impl EvalPoint {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self { t, r: [x, y, z] }
    }

    fn position(&self) -> RealVec3 {
        Vector3::new(self.r[0], self.r[1], self.r[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub point: EvalPoint,
    /// Richardson-extrapolated left-minus-right side of each wave equation.
    pub residual_vector: ComplexVec3,
    /// Richardson-extrapolated Gauss-law residual.
    pub gauss_residual: Complex64,
    /// Error estimate of the wave residual at the finer step.
    pub discretization_estimate: f64,
    pub gauss_discretization_estimate: f64,
}

impl ResidualReport {
    pub fn wave_magnitude(&self) -> f64 {
        self.residual_vector.norm()
    }

    /// The stencil error dominates the wave residual.
    pub fn inconclusive(&self) -> bool {
        self.discretization_estimate > self.wave_magnitude()
    }

    pub fn gauss_inconclusive(&self) -> bool {
        self.gauss_discretization_estimate > self.gauss_residual.norm()
    }

    /// Wave residual net of the discretization estimate, floored at zero.
    pub fn physical_wave(&self) -> f64 {
        (self.wave_magnitude() - self.discretization_estimate).max(0.0)
    }

    pub fn physical_gauss(&self) -> f64 {
        (self.gauss_residual.norm() - self.gauss_discretization_estimate).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussReport {
    pub residual: Complex64,
    pub discretization_estimate: f64,
}

impl GaussReport {
    pub fn inconclusive(&self) -> bool {
        self.discretization_estimate > self.residual.norm()
    }
}

/// Central-difference weights `(offset, weight)` for the first and second derivative.
fn first_derivative_weights(order: u8) -> &'static [(f64, f64)] {
    match order {
        2 => &[(-1.0, -0.5), (1.0, 0.5)],
        _ => &[
            (-2.0, 1.0 / 12.0),
            (-1.0, -8.0 / 12.0),
            (1.0, 8.0 / 12.0),
            (2.0, -1.0 / 12.0),
        ],
    }
}

fn second_derivative_weights(order: u8) -> &'static [(f64, f64)] {
    match order {
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        _ => &[
            (-2.0, -1.0 / 12.0),
            (-1.0, 16.0 / 12.0),
            (0.0, -30.0 / 12.0),
            (1.0, 16.0 / 12.0),
            (2.0, -1.0 / 12.0),
        ],
    }
}

/// Field derivatives needed by the residuals, all at one point.
struct Derivatives {
    e_tt: ComplexVec3,
    e_xx: ComplexVec3,
    e_yy: ComplexVec3,
    e_zz: ComplexVec3,
    e_x: ComplexVec3,
    e_y: ComplexVec3,
    e_z: ComplexVec3,
}

fn derivatives(mode: &PerturbedMode, form: FieldForm, point: &EvalPoint, stencil: &StencilSpec) -> Result<Derivatives> {
    let t = point.t;
    let r = point.position();
    let field = |dt: f64, dr: RealVec3| mode.field(form, t + dt, &(r + dr));
    let axis = |i: usize| -> RealVec3 {
        let mut v = Vector3::zeros();
        v[i] = 1.0;
        v
    };

    let d1 = first_derivative_weights(stencil.order);
    let d2 = second_derivative_weights(stencil.order);
    let steps = [stencil.h_x, stencil.h_y, stencil.h_z];

    let mut e_tt = Vector3::zeros();
    for &(o, w) in d2 {
        e_tt += field(o * stencil.h_t, Vector3::zeros())? * Complex64::from(w);
    }
    e_tt /= Complex64::from(stencil.h_t * stencil.h_t);

    let mut second = [Vector3::zeros(); 3];
    let mut first = [Vector3::zeros(); 3];
    for i in 0..3 {
        let h = steps[i];
        let e = axis(i);
        let mut acc2: ComplexVec3 = Vector3::zeros();
        for &(o, w) in d2 {
            acc2 += field(0.0, e * (o * h))? * Complex64::from(w);
        }
        second[i] = acc2 / Complex64::from(h * h);
        let mut acc1: ComplexVec3 = Vector3::zeros();
        for &(o, w) in d1 {
            acc1 += field(0.0, e * (o * h))? * Complex64::from(w);
        }
        first[i] = acc1 / Complex64::from(h);
    }

    Ok(Derivatives {
        e_tt,
        e_xx: second[0],
        e_yy: second[1],
        e_zz: second[2],
        e_x: first[0],
        e_y: first[1],
        e_z: first[2],
    })
}

fn raw_residuals(
    mode: &PerturbedMode,
    form: FieldForm,
    point: &EvalPoint,
    stencil: &StencilSpec,
) -> Result<(ComplexVec3, Complex64)> {
    let dz = mode.metric().offset(point.r[2])?;
    let a = mode.metric().a;
    let c2 = mode.constants().c * mode.constants().c;
    let d = derivatives(mode, form, point, stencil)?;
    let (x, y, z) = (0, 1, 2);

    let transverse = |j: usize, cross: Complex64| {
        d.e_tt[j] * ((1.0 - a * dz) / c2) - d.e_xx[j] - d.e_yy[j] - d.e_zz[j] * (1.0 + a * dz) - d.e_z[j] * a
            + cross * a
    };
    let wave = Vector3::new(
        transverse(x, d.e_x[z]),
        transverse(y, d.e_y[z]),
        d.e_tt[z] / c2 - (d.e_xx[z] + d.e_yy[z]) * (1.0 + a * dz) - d.e_zz[z] * (1.0 + 2.0 * a * dz) - d.e_z[z] * a,
    );
    let gauss = d.e_x[x] + d.e_y[y] + d.e_z[z] * (1.0 + a * dz);
    Ok((wave, gauss))
}

/// Residuals of the linearized Maxwell system for `form` at `point`.
pub fn wave_residual(
    mode: &PerturbedMode,
    form: FieldForm,
    point: &EvalPoint,
    stencil: &StencilSpec,
) -> Result<ResidualReport> {
    stencil.validate()?;
    let (w1, g1) = raw_residuals(mode, form, point, stencil)?;
    let (w2, g2) = raw_residuals(mode, form, point, &stencil.halved())?;
    let q = Complex64::from(stencil.richardson_factor());
    let wave_corr = (w2 - w1) / q;
    let gauss_corr = (g2 - g1) / q;
    // an exactly divergence-free field leaves only cancellation error in the
    // first differences, which the Richardson difference can underestimate
    let fine = stencil.halved();
    let h_min = fine.h_x.min(fine.h_y).min(fine.h_z);
    let weights: f64 = first_derivative_weights(fine.order).iter().map(|(_, w)| w.abs()).sum();
    let magnitude = mode.field(form, point.t, &point.position())?.norm();
    let roundoff = 2.0 * f64::EPSILON * magnitude * weights / h_min;
    Ok(ResidualReport {
        point: *point,
        residual_vector: w2 + wave_corr,
        gauss_residual: g2 + gauss_corr,
        discretization_estimate: wave_corr.norm(),
        gauss_discretization_estimate: gauss_corr.norm() + roundoff,
    })
}

/// Gauss-law residual `∂x Ex + ∂y Ey + (1 + aζ) ∂z Ez` for `form` at `point`.
pub fn gauss_residual(
    mode: &PerturbedMode,
    form: FieldForm,
    point: &EvalPoint,
    stencil: &StencilSpec,
) -> Result<GaussReport> {
    let report = wave_residual(mode, form, point, stencil)?;
    Ok(GaussReport {
        residual: report.gauss_residual,
        discretization_estimate: report.gauss_discretization_estimate,
    })
}

/// Spatial contractions that vanish for a transverse wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transversality {
    /// `|pⁱ f_i|`
    pub p_dot_f: f64,
    /// `|k̃ⁱ f_i|`, index raised with the spatial metric
    pub k_dot_f: f64,
    /// `|pⁱ k̃_i|`
    pub p_dot_k: f64,
}

impl Transversality {
    pub fn max(&self) -> f64 {
        self.p_dot_f.max(self.k_dot_f).max(self.p_dot_k)
    }
}

pub fn transversality_check(mode: &PerturbedMode, z: f64) -> Result<Transversality> {
    let dz = mode.metric().offset(z)?;
    let a = mode.metric().a;
    let kt = mode.local_wavevector(z)?;
    let kt = Vector3::new(kt[1], kt[2], kt[3]);
    let f = mode.polarization_e(z)?;
    let p = mode.polarization_h(z)?;
    // γ^{ij} = diag(1, 1, 1/(1 − aζ)) for the spatial part
    let k_up = Vector3::new(kt.x, kt.y, kt.z / (1.0 - a * dz));
    Ok(Transversality {
        p_dot_f: p.dot(&f).abs(),
        k_dot_f: k_up.dot(&f).abs(),
        p_dot_k: p.dot(&kt).abs(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid("slope fit needs at least two paired samples".into()));
    }
    if xs.iter().chain(ys.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::Invalid("slope fit needs strictly positive samples".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Outcome of fitting `log residual` against `log a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScalingFit {
    Slope(f64),
    /// Every residual is below its discretization estimate: the equation holds exactly.
    Vanishing,
    /// Some residuals are resolved and others are not, so no slope can be fitted.
    Unresolved,
}

impl ScalingFit {
    fn from_samples(a_values: &[f64], residuals: &[f64]) -> Result<Self> {
        let resolved = residuals.iter().filter(|r| **r > 0.0).count();
        if resolved == 0 {
            Ok(ScalingFit::Vanishing)
        } else if resolved < residuals.len() {
            Ok(ScalingFit::Unresolved)
        } else {
            Ok(ScalingFit::Slope(log_log_slope(a_values, residuals)?))
        }
    }

    pub fn slope(self) -> Option<f64> {
        match self {
            ScalingFit::Slope(s) => Some(s),
            _ => None,
        }
    }

    /// Residual is `O(a²)`: a slope within `tol` of 2, or identically zero.
    pub fn is_second_order(self, tol: f64) -> bool {
        match self {
            ScalingFit::Slope(s) => (s - 2.0).abs() <= tol,
            ScalingFit::Vanishing => true,
            ScalingFit::Unresolved => false,
        }
    }
}

/// Residual scaling of one mode over a sweep of `a` at a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub a_values: Vec<f64>,
    pub reports: Vec<ResidualReport>,
    pub wave_fit: ScalingFit,
    pub gauss_fit: ScalingFit,
    /// Fitted `C` in `residual ≈ C a²` at the largest `a`.
    pub wave_constant: f64,
    pub gauss_constant: f64,
}

pub fn scaling_study(
    mode: &PerturbedMode,
    form: FieldForm,
    point: &EvalPoint,
    stencil: &StencilSpec,
    a_values: &[f64],
) -> Result<ScalingStudy> {
    if a_values.len() < 2 {
        return Err(Error::Invalid("scaling study needs at least two values of a".into()));
    }
    let mut reports = Vec::with_capacity(a_values.len());
    for &a in a_values {
        let mut metric = *mode.metric();
        metric.a = a;
        reports.push(wave_residual(&mode.with_metric(metric), form, point, stencil)?);
    }
    let wave: Vec<f64> = reports.iter().map(|r| r.physical_wave()).collect();
    let gauss: Vec<f64> = reports.iter().map(|r| r.physical_gauss()).collect();
    let (i_max, a_max) = a_values
        .iter()
        .copied()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty sweep");
    Ok(ScalingStudy {
        a_values: a_values.to_vec(),
        wave_fit: ScalingFit::from_samples(a_values, &wave)?,
        gauss_fit: ScalingFit::from_samples(a_values, &gauss)?,
        wave_constant: wave[i_max] / (a_max * a_max),
        gauss_constant: gauss[i_max] / (a_max * a_max),
        reports,
    })
}

/// Probe point for residual studies at height `z0 + kz²/|k|²`.
///
/// The corrections grow like `aζ|k|²/kz²`, so this height makes the expansion
/// parameter exactly `a` for every mode direction. Higher points let the `a²`
/// remainder swamp the `O(a)` signal of an ablated near-axial mode.
pub fn probe_point(mode: &PerturbedMode) -> EvalPoint {
    let k = mode.k();
    let z = mode.metric().z0 + k.z * k.z / k.norm_squared();
    EvalPoint::new(0.3, 0.7, -0.4, z)
}

/// Residual scaling of one mode: the wave equations on the eikonal field, Gauss's
/// law on the full first-order field, and Gauss's law with `C3` removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVerification {
    pub point: EvalPoint,
    pub wave: ScalingStudy,
    pub gauss: ScalingStudy,
    pub gauss_without_c3: ScalingStudy,
}

pub fn verify_mode(mode: &PerturbedMode, stencil: &StencilSpec, a_values: &[f64]) -> Result<ModeVerification> {
    let point = probe_point(mode);
    let full = FieldForm::Expanded(crate::modes::CorrectionTerms::ALL);
    let ablated = FieldForm::Expanded(crate::modes::CorrectionTerms::without_gauss_constant());
    Ok(ModeVerification {
        point,
        wave: scaling_study(mode, FieldForm::Eikonal, &point, stencil, a_values)?,
        gauss: scaling_study(mode, full, &point, stencil, a_values)?,
        gauss_without_c3: scaling_study(mode, ablated, &point, stencil, a_values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{PhysicalConstants, WeakFieldMetric};
    use crate::modes::{CorrectionTerms, ModeIndex, Polarization};

    fn mode(k: RealVec3, s: Polarization, a: f64) -> PerturbedMode {
        PerturbedMode::new(
            ModeIndex::new(k, s).unwrap(),
            WeakFieldMetric::new(a, 0.0).unwrap(),
            PhysicalConstants::scaled(),
            0.5,
        )
        .unwrap()
    }

    const A_SWEEP: [f64; 3] = [1e-4, 1e-3, 1e-2];

    #[test]
    fn flat_plane_wave_has_only_discretization_residual() {
        let m = mode(Vector3::new(0.3, -0.5, 0.7), Polarization::S2, 0.0);
        let p = EvalPoint::new(0.3, 0.2, -0.1, 1.0);
        for order in [2, 4] {
            let st = StencilSpec::uniform(2e-2, order).unwrap();
            let r = wave_residual(&m, FieldForm::Eikonal, &p, &st).unwrap();
            assert!(r.wave_magnitude() < 1e-7, "order {order}: {}", r.wave_magnitude());
            assert!(r.gauss_residual.norm() < 1e-8);
        }
    }

    #[test]
    fn second_order_stencil_converges() {
        let m = mode(Vector3::new(0.3, -0.5, 0.7), Polarization::S2, 0.0);
        let p = EvalPoint::new(0.3, 0.2, -0.1, 1.0);
        let coarse = raw_residuals(&m, FieldForm::Eikonal, &p, &StencilSpec::uniform(4e-2, 2).unwrap())
            .unwrap()
            .0
            .norm();
        let fine = raw_residuals(&m, FieldForm::Eikonal, &p, &StencilSpec::uniform(2e-2, 2).unwrap())
            .unwrap()
            .0
            .norm();
        assert!((coarse / fine - 4.0).abs() < 0.1, "{}", coarse / fine);
    }

    #[test]
    fn wave_residual_scales_quadratically() {
        let m = mode(Vector3::new(0.4, 0.3, 0.8), Polarization::S2, 0.0);
        let p = EvalPoint::new(0.1, 0.2, 0.3, 2.0);
        let st = StencilSpec::default();
        for form in [FieldForm::Eikonal, FieldForm::Expanded(CorrectionTerms::ALL)] {
            let study = scaling_study(&m, form, &p, &st, &A_SWEEP).unwrap();
            assert!(study.wave_fit.is_second_order(0.1), "{form:?}: {:?}", study.wave_fit);
        }
    }

    #[test]
    fn gauss_constant_is_required() {
        let m = mode(Vector3::new(0.4, 0.3, 0.8), Polarization::S2, 0.0);
        let p = EvalPoint::new(0.1, 0.2, 0.3, 2.0);
        let st = StencilSpec::default();
        let with = scaling_study(&m, FieldForm::Expanded(CorrectionTerms::ALL), &p, &st, &A_SWEEP).unwrap();
        assert!(
            matches!(with.gauss_fit, ScalingFit::Slope(_)) && with.gauss_fit.is_second_order(0.1),
            "{:?}",
            with.gauss_fit
        );
        let without = scaling_study(
            &m,
            FieldForm::Expanded(CorrectionTerms::without_gauss_constant()),
            &p,
            &st,
            &A_SWEEP,
        )
        .unwrap();
        assert!(without.gauss_fit.slope().unwrap() < 1.2, "{:?}", without.gauss_fit);
    }

    #[test]
    fn every_correction_term_is_needed() {
        let m = mode(Vector3::new(0.4, 0.3, 0.8), Polarization::S2, 0.0);
        let p = EvalPoint::new(0.1, 0.2, 0.3, 2.0);
        let st = StencilSpec::default();
        let ablations = [
            CorrectionTerms {
                amplitude: false,
                ..CorrectionTerms::ALL
            },
            CorrectionTerms {
                phase: false,
                ..CorrectionTerms::ALL
            },
            CorrectionTerms {
                polarization: false,
                ..CorrectionTerms::ALL
            },
        ];
        for terms in ablations {
            let s = scaling_study(&m, FieldForm::Expanded(terms), &p, &st, &A_SWEEP).unwrap();
            let slope = s.wave_fit.slope().unwrap();
            assert!((slope - 1.0).abs() < 0.2, "{terms:?}: {slope}");
        }
    }

    #[test]
    fn transversality_exact_when_flat_or_at_reference() {
        let k = Vector3::new(0.5, -0.2, 0.6);
        for s in [Polarization::S1, Polarization::S2] {
            let flat = mode(k, s, 0.0);
            assert!(transversality_check(&flat, 3.0).unwrap().max() < 1e-15);
            let curved = mode(k, s, 0.01);
            assert!(transversality_check(&curved, 0.0).unwrap().max() < 1e-15);
        }
    }

    #[test]
    fn transversality_is_second_order() {
        let k = Vector3::new(0.5, -0.2, 0.6);
        let z = 2.0;
        let t1 = transversality_check(&mode(k, Polarization::S2, 2e-3), z).unwrap();
        let t2 = transversality_check(&mode(k, Polarization::S2, 1e-3), z).unwrap();
        let ratio = t1.k_dot_f / t2.k_dot_f;
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
        assert!(t1.p_dot_f < 1e-15 && t1.p_dot_k < 1e-15);
    }

    #[test]
    fn random_modes_at_probe_point() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let st = StencilSpec::default();
        let mut count = 0;
        while count < 12 {
            let dir = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            if dir.norm() > 0.5 || (dir.z / dir.norm()).abs() < 0.1 {
                continue;
            }
            count += 1;
            let k = dir.normalize() * rng.random_range(0.8..1.2);
            let s = if rng.random::<bool>() {
                Polarization::S1
            } else {
                Polarization::S2
            };
            let m = mode(k, s, 0.0);
            let v = verify_mode(&m, &st, &A_SWEEP).unwrap();
            assert!(
                v.wave.wave_fit.is_second_order(0.1),
                "{k:?} {s:?}: {:?}",
                v.wave.wave_fit
            );
            assert!(
                v.gauss.gauss_fit.is_second_order(0.1),
                "{k:?} {s:?}: {:?}",
                v.gauss.gauss_fit
            );
            match s {
                // ẑ×k polarization has no vertical part, so Gauss's law holds exactly
                Polarization::S1 => assert_eq!(v.gauss.gauss_fit, ScalingFit::Vanishing),
                Polarization::S2 => assert!(v.gauss_without_c3.gauss_fit.slope().unwrap() < 1.2),
            }
        }
    }

    #[test]
    fn grazing_and_near_axial_modes() {
        let st = StencilSpec::default();
        for k in [
            Vector3::new(0.995_f64.sqrt(), 0.0, 0.1 * 0.995_f64.sqrt() / 0.99_f64.sqrt()),
            Vector3::new(0.3, -0.4, -0.1).normalize(),
            Vector3::new(0.2, 0.25, 0.95),
        ] {
            let v = verify_mode(&mode(k, Polarization::S2, 0.0), &st, &A_SWEEP).unwrap();
            assert!(v.wave.wave_fit.is_second_order(0.1), "{k:?}: {:?}", v.wave.wave_fit);
            assert!(v.gauss.gauss_fit.is_second_order(0.1), "{k:?}: {:?}", v.gauss.gauss_fit);
            let ablated = v.gauss_without_c3.gauss_fit.slope().unwrap();
            assert!(ablated < 1.2, "{k:?}: {ablated}");
        }
    }

    /// `C3 ∝ K⊥`, so near the axis removing it costs little and the `a²`
    /// remainder dominates the ablated residual at the top of the sweep.
    #[test]
    fn ablation_weakens_near_the_axis() {
        let st = StencilSpec::default();
        let slope = |k: RealVec3| {
            let v = verify_mode(&mode(k, Polarization::S2, 0.0), &st, &A_SWEEP).unwrap();
            v.gauss_without_c3.gauss_fit.slope().unwrap()
        };
        assert!(slope(Vector3::new(-0.05, 0.1, 1.0)) > 1.2);
        assert!(slope(Vector3::new(-0.5, 1.0, 1.0)) < 1.05);
    }

    #[test]
    fn slope_fit() {
        let xs = [1.0, 10.0, 100.0];
        let ys = [3.0, 300.0, 30000.0];
        assert!((log_log_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&xs, &[1.0, 0.0, 2.0]).is_err());
        assert!(log_log_slope(&xs[..1], &ys[..1]).is_err());
        assert_eq!(ScalingFit::from_samples(&xs, &[0.0; 3]).unwrap(), ScalingFit::Vanishing);
        assert_eq!(
            ScalingFit::from_samples(&xs, &[0.0, 1.0, 2.0]).unwrap(),
            ScalingFit::Unresolved
        );
        assert!(!ScalingFit::Unresolved.is_second_order(0.1));
    }

    #[test]
    fn stencil_validation() {
        assert!(StencilSpec::uniform(0.0, 4).is_err());
        assert!(StencilSpec::uniform(0.1, 3).is_err());
        assert!(StencilSpec::default().validate().is_ok());
    }

    #[test]
    fn report_flags_inconclusive_flat_case() {
        let m = mode(Vector3::new(0.3, -0.5, 0.7), Polarization::S1, 0.0);
        let p = EvalPoint::new(0.0, 0.0, 0.0, 0.5);
        let st = StencilSpec::uniform(0.1, 2).unwrap();
        let r = wave_residual(&m, FieldForm::Eikonal, &p, &st).unwrap();
        assert!(r.inconclusive());
    }
}
