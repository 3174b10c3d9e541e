//! Spectrum of the photon re-emitted by a timed Dicke state in a weak field.
//!
//! Three routes to the `k_z` marginal, with `k_x, k_y` pinned to the absorbed
//! photon's: the closed-form one-sided kernel `G`, direct quadrature of the
//! height integral, and Monte Carlo sums over random ensembles. `ν` is an
//! angular frequency throughout and `|k0| = ν/c`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::{curved_timed_dicke, flat_timed_dicke, FCorrectionParams, TimedDickeState};
use crate::ensemble::{Ensemble, SampleBox};
use crate::error::{Error, Result};
use crate::metric::{check_linear, WeakFieldMetric};
use crate::modes::{RealVec3, DEFAULT_KZ_GUARD};
use crate::quadrature::{integrate, integrate_to_upper, QuadratureOptions};

/// Largest `Γ/ν` accepted for spectrum work; the scaled test regime sits at 1e-2.
pub const MAX_SPECTRUM_DECAY_RATIO: f64 = 0.1;

/// Relative tolerance on `|k0| = ν/c`.
const RESONANCE_TOL: f64 = 1e-9;

/// Photon frequency used in the emission denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    /// `ω_k = c|k|`.
    #[default]
    Exact,
    /// `ω_k = ν`, the on-shell value the closed-form kernel assumes.
    Resonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMethod {
    Analytic,
    Quadrature,
    MonteCarlo,
}

impl SpectrumMethod {
    pub fn label(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Quadrature => "quadrature",
            Self::MonteCarlo => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    /// Absorbed-photon wavevector (1/m).
    pub k0: RealVec3,
    pub nu: f64,
    pub gamma: f64,
    pub metric: WeakFieldMetric,
    /// Reference height `Z` of the mode set (m).
    pub z_mode: f64,
    pub c: f64,
    pub dispersion: Dispersion,
}

impl SpectrumParams {
    pub fn new(k0: RealVec3, nu: f64, gamma: f64, metric: WeakFieldMetric, z_mode: f64, c: f64) -> Result<Self> {
        let p = Self {
            k0,
            nu,
            gamma,
            metric,
            z_mode,
            c,
            dispersion: Dispersion::Exact,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds `k0` of length `ν/c` at polar angle `θ0` from the z-axis and azimuth `φ0`.
    pub fn from_angles(
        theta0: f64,
        phi0: f64,
        nu: f64,
        gamma: f64,
        metric: WeakFieldMetric,
        z_mode: f64,
        c: f64,
    ) -> Result<Self> {
        let k = nu / c;
        let k0 = Vector3::new(
            k * theta0.sin() * phi0.cos(),
            k * theta0.sin() * phi0.sin(),
            k * theta0.cos(),
        );
        Self::new(k0, nu, gamma, metric, z_mode, c)
    }

    pub fn with_dispersion(mut self, dispersion: Dispersion) -> Self {
        self.dispersion = dispersion;
        self
    }

    pub fn with_metric(mut self, metric: WeakFieldMetric) -> Result<Self> {
        metric.validate()?;
        self.metric = metric;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        for (name, v) in [("nu", self.nu), ("gamma", self.gamma), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.gamma >= MAX_SPECTRUM_DECAY_RATIO * self.nu {
            return Err(Error::Domain(format!(
                "decay rate {} is not small against ν = {} (need Γ < {MAX_SPECTRUM_DECAY_RATIO}·ν)",
                self.gamma, self.nu
            )));
        }
        if !self.z_mode.is_finite() || self.k0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("k0 and Z must be finite".into()));
        }
        let k = self.nu / self.c;
        if (self.k0.norm() - k).abs() > RESONANCE_TOL * k {
            return Err(Error::Domain(format!(
                "|k0| = {} is not resonant with ν/c = {k}",
                self.k0.norm()
            )));
        }
        Ok(())
    }

    pub fn cos_theta0(&self) -> f64 {
        self.k0.z / self.k0.norm()
    }

    pub fn theta0(&self) -> f64 {
        self.cos_theta0().clamp(-1.0, 1.0).acos()
    }

    pub fn k0z(&self) -> f64 {
        self.k0.z
    }

    /// Mode frequency for `k = (k0x, k0y, k_z)`.
    pub fn omega(&self, kz: f64) -> f64 {
        match self.dispersion {
            Dispersion::Exact => self.c * Vector3::new(self.k0.x, self.k0.y, kz).norm(),
            Dispersion::Resonant => self.nu,
        }
    }

    /// Height scale `Γ/(aν)` over which the emission denominator varies.
    pub fn decay_length(&self) -> Result<f64> {
        self.require_curved()?;
        Ok(self.gamma / (self.metric.a * self.nu))
    }

    fn require_curved(&self) -> Result<()> {
        if self.metric.a <= 0.0 {
            return Err(Error::Domain(
                "the one-sided kernel needs a > 0; use the flat delta limit for a = 0".into(),
            ));
        }
        Ok(())
    }

    fn require_oblique(&self) -> Result<()> {
        if self.cos_theta0().abs() <= DEFAULT_KZ_GUARD {
            return Err(Error::Domain(
                "absorbed photon propagates horizontally (cos θ0 = 0)".into(),
            ));
        }
        Ok(())
    }

    fn check_mode(&self, kz: f64) -> Result<()> {
        let k = Vector3::new(self.k0.x, self.k0.y, kz);
        if !kz.is_finite() || kz.abs() <= DEFAULT_KZ_GUARD * k.norm() {
            return Err(Error::Domain(format!("k_z = {kz} is inside the horizontal-mode guard")));
        }
        Ok(())
    }

    /// `(ω − ν) + (a/2)ω(Z − z) + iΓ/2`.
    fn denominator(&self, omega: f64, z: f64) -> Complex64 {
        Complex64::new(
            (omega - self.nu) + 0.5 * self.metric.a * omega * (self.z_mode - z),
            0.5 * self.gamma,
        )
    }
}

/// Emitted-photon amplitude sampled on a `k_z` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngularSpectrum {
    pub method: SpectrumMethod,
    pub a: f64,
    pub kz_grid: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    /// `|amplitude|²`, or the replica mean of `|A_r|²` for Monte Carlo.
    pub prob: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl AngularSpectrum {
    fn from_amplitudes(method: SpectrumMethod, a: f64, kz_grid: &[f64], amplitude: Vec<Complex64>) -> Self {
        let prob = amplitude.iter().map(|c| c.norm_sqr()).collect();
        Self {
            method,
            a,
            kz_grid: kz_grid.to_vec(),
            amplitude,
            prob,
            stderr: None,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.kz_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kz_grid.is_empty()
    }

    /// Index of the largest `|amplitude|`.
    pub fn peak_index(&self) -> usize {
        self.amplitude
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Amplitudes divided by the amplitude at the peak.
    pub fn normalized(&self) -> Vec<Complex64> {
        let peak = self.amplitude[self.peak_index()];
        self.amplitude.iter().map(|c| c / peak).collect()
    }

    /// Rows `method,a,k_z,re_amp,im_amp,prob,stderr`; `stderr` is empty when absent.
    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for i in 0..self.len() {
            let se = self.stderr.as_ref().map(|s| s[i].to_string()).unwrap_or_default();
            w.write_record([
                self.method.label().to_string(),
                self.a.to_string(),
                self.kz_grid[i].to_string(),
                self.amplitude[i].re.to_string(),
                self.amplitude[i].im.to_string(),
                self.prob[i].to_string(),
                se,
            ])?;
        }
        Ok(())
    }
}

pub const SPECTRUM_CSV_HEADER: [&str; 7] = ["method", "a", "k_z", "re_amp", "im_amp", "prob", "stderr"];

fn check_grid(kz_grid: &[f64]) -> Result<()> {
    if kz_grid.is_empty() {
        return Err(Error::Invalid("k_z grid is empty".into()));
    }
    if kz_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("k_z grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `(−i/(aν)) exp[−(k0z − k_z)Γ/(aν)] Θ(k0z − k_z)` with `Θ(0) = 1`.
pub fn g_kernel(kz: f64, params: &SpectrumParams) -> Result<Complex64> {
    params.require_curved()?;
    params.require_oblique()?;
    let delta = params.k0z() - kz;
    if delta < 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let scale = params.metric.a * params.nu;
    Ok(Complex64::new(0.0, -(-delta * params.gamma / scale).exp() / scale))
}

/// `∫ G dk_z` by adaptive quadrature over `(−∞, k0z]`.
pub fn kernel_area(params: &SpectrumParams, opts: &QuadratureOptions) -> Result<Complex64> {
    params.require_curved()?;
    let width = params.metric.a * params.nu / params.gamma;
    let k0z = params.k0z();
    // integrate in units of the kernel width so the quadrature sees an O(1) scale
    let r = integrate_to_upper(
        |u| g_kernel(k0z + width * u, params).unwrap_or_default() * width,
        0.0,
        opts,
    )?;
    Ok(r.value)
}

pub fn analytic_spectrum(kz_grid: &[f64], params: &SpectrumParams) -> Result<AngularSpectrum> {
    check_grid(kz_grid)?;
    let amp = kz_grid
        .iter()
        .map(|&kz| g_kernel(kz, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(AngularSpectrum::from_amplitudes(
        SpectrumMethod::Analytic,
        params.metric.a,
        kz_grid,
        amp,
    ))
}

/// What happens outside the quadrature window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailTreatment {
    /// Integrate over the window only, as for a finite atomic cloud.
    #[default]
    Truncate,
    /// Add the endpoint expansion of the two semi-infinite tails, recovering the
    /// integral over the whole line. Needs `k_z ≠ k0z`.
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZIntegralOptions {
    pub z_min: f64,
    pub z_max: f64,
    /// Relative to the smaller of `4π/(aω)` and `2·(z_max − z_min)/Γ`.
    pub rel_tol: f64,
    pub tails: TailTreatment,
    /// Weight the integrand by the proper-volume factor `√(1 − aζ)`.
    pub volume_weight: bool,
    pub max_intervals: usize,
}

impl ZIntegralOptions {
    pub fn window(z_min: f64, z_max: f64) -> Self {
        Self {
            z_min,
            z_max,
            rel_tol: 1e-9,
            tails: TailTreatment::Truncate,
            volume_weight: false,
            max_intervals: 400_000,
        }
    }

    /// Window of `decay_lengths` times `Γ/(aν)` centered on `Z`.
    pub fn centered(params: &SpectrumParams, decay_lengths: f64) -> Result<Self> {
        let half = 0.5 * decay_lengths * params.decay_length()?;
        Ok(Self::window(params.z_mode - half, params.z_mode + half))
    }

    pub fn with_tails(mut self, tails: TailTreatment) -> Self {
        self.tails = tails;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// `Σ n! (B/u)^n / u` with `u = (A + Bz)·iΔ`, cut at its smallest term.
/// Returns the sum and the size of the first omitted term.
fn tail_series(b: f64, u: Complex64) -> Result<(Complex64, f64)> {
    let ratio = Complex64::new(b, 0.0) / u;
    if ratio.norm() >= 0.5 {
        return Err(Error::Invalid(
            "window too short for the asymptotic tail expansion".into(),
        ));
    }
    let mut term = Complex64::new(1.0, 0.0) / u;
    let mut sum = term;
    for n in 1..128 {
        let next = term * ratio * n as f64;
        if next.norm() >= term.norm() {
            return Ok((sum, next.norm()));
        }
        if next.norm() <= 1e-17 * sum.norm() {
            return Ok((sum + next, 0.0));
        }
        sum += next;
        term = next;
    }
    Ok((sum, term.norm()))
}

/// `∫ dz e^{i(k0z − k_z)z} / [(ω_k − ν + iΓ/2) + (a/2)ω_k(Z − z)]` over the window.
pub fn z_integral_oracle(kz: f64, params: &SpectrumParams, opts: &ZIntegralOptions) -> Result<Complex64> {
    params.validate()?;
    params.require_oblique()?;
    params.check_mode(kz)?;
    if !(opts.z_min.is_finite() && opts.z_max.is_finite() && opts.z_max > opts.z_min) {
        return Err(Error::Invalid("z window must be a finite, non-empty interval".into()));
    }
    if opts.volume_weight && opts.tails == TailTreatment::Asymptotic {
        return Err(Error::Invalid(
            "the proper-volume weight is only defined on a finite window".into(),
        ));
    }
    let a = params.metric.a;
    let omega = params.omega(kz);
    let delta = params.k0z() - kz;
    let span = opts.z_max - opts.z_min;

    let metric = params.metric;
    let weight = |z: f64| -> f64 {
        if opts.volume_weight {
            (1.0 - a * (z - metric.z0)).max(0.0).sqrt()
        } else {
            1.0
        }
    };
    if opts.volume_weight {
        metric.offset(opts.z_min)?;
        metric.offset(opts.z_max)?;
    }
    let integrand = |z: f64| Complex64::from_polar(weight(z), delta * z) / params.denominator(omega, z);

    // the integrand never exceeds 2/Γ, and the full-line peak is 4π/(aω)
    let bound = 2.0 * span / params.gamma;
    let scale = if a > 0.0 {
        bound.min(4.0 * PI / (a * omega))
    } else {
        bound
    };
    let oscillations = (delta.abs() * span / PI).ceil();
    let resolution = if a > 0.0 {
        (span / params.decay_length()?).ceil()
    } else {
        1.0
    };
    let panels = oscillations.max(resolution).clamp(16.0, 50_000.0) as usize;
    let qopts = QuadratureOptions {
        abs_tol: opts.rel_tol * scale,
        rel_tol: opts.rel_tol,
        max_intervals: opts.max_intervals,
        initial_panels: panels,
    };
    let mut value = integrate(integrand, opts.z_min, opts.z_max, &qopts)?.value;

    if opts.tails == TailTreatment::Asymptotic {
        if delta == 0.0 {
            return Err(Error::Domain(
                "the full-line height integral diverges at k_z = k0z".into(),
            ));
        }
        let b = -0.5 * a * omega;
        let i_delta = Complex64::new(0.0, delta);
        let (lower, lower_err) = tail_series(b, params.denominator(omega, opts.z_min) * i_delta)?;
        let (upper, upper_err) = tail_series(b, params.denominator(omega, opts.z_max) * i_delta)?;
        let tail_err = lower_err + upper_err;
        if tail_err > qopts.abs_tol {
            return Err(Error::Quadrature {
                error: tail_err,
                tolerance: qopts.abs_tol,
                intervals: 0,
            });
        }
        value += Complex64::from_polar(1.0, delta * opts.z_min) * lower
            - Complex64::from_polar(1.0, delta * opts.z_max) * upper;
    }
    Ok(value)
}

pub fn quadrature_spectrum(
    kz_grid: &[f64],
    params: &SpectrumParams,
    opts: &ZIntegralOptions,
) -> Result<AngularSpectrum> {
    check_grid(kz_grid)?;
    let amp = kz_grid
        .par_iter()
        .map(|&kz| z_integral_oracle(kz, params, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(AngularSpectrum::from_amplitudes(
        SpectrumMethod::Quadrature,
        params.metric.a,
        kz_grid,
        amp,
    ))
}

/// `Σ_j c_j e^{−ik·r_j} / (ω_k[Z − z_j] − ν + iΓ/2)` on each grid point.
fn ensemble_amplitudes(
    ensemble: &Ensemble,
    state: &TimedDickeState,
    kz_grid: &[f64],
    params: &SpectrumParams,
    batches: usize,
) -> Result<Vec<(Complex64, f64)>> {
    let a = params.metric.a;
    for r in ensemble.positions() {
        check_linear(a * (params.z_mode - r.z))?;
    }
    let weights = ensemble.weights();
    // transverse phases are shared by every grid point
    let base: Vec<Complex64> = ensemble
        .positions()
        .iter()
        .zip(&state.amplitudes)
        .enumerate()
        .map(|(j, (r, c))| {
            let w = weights.map_or(1.0, |w| w[j]);
            c * Complex64::from_polar(w, -(params.k0.x * r.x + params.k0.y * r.y))
        })
        .collect();
    let n = base.len();
    let batches = batches.clamp(1, n);
    let out = kz_grid
        .par_iter()
        .map(|&kz| {
            let omega = params.omega(kz);
            let mut parts = vec![Complex64::new(0.0, 0.0); batches];
            for (j, (b, r)) in base.iter().zip(ensemble.positions()).enumerate() {
                let term = b * Complex64::from_polar(1.0, -kz * r.z) / params.denominator(omega, r.z);
                parts[j * batches / n] += term;
            }
            let total: Complex64 = parts.iter().sum();
            let spread = if batches > 1 {
                let mean = total / batches as f64;
                let ss: f64 = parts.iter().map(|p| (p - mean).norm_sqr()).sum();
                (batches as f64 * ss / (batches - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            (total, spread)
        })
        .collect();
    Ok(out)
}

/// Emission amplitude of one ensemble, with a batch-resampling standard error.
pub fn monte_carlo_spectrum(
    ensemble: &Ensemble,
    state: &TimedDickeState,
    kz_grid: &[f64],
    params: &SpectrumParams,
    batches: usize,
) -> Result<AngularSpectrum> {
    params.validate()?;
    params.require_oblique()?;
    check_grid(kz_grid)?;
    if state.len() != ensemble.len() {
        return Err(Error::Invalid(format!(
            "state has {} amplitudes for {} atoms",
            state.len(),
            ensemble.len()
        )));
    }
    for &kz in kz_grid {
        params.check_mode(kz)?;
    }
    let rows = ensemble_amplitudes(ensemble, state, kz_grid, params, batches)?;
    let (amp, se): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut s = AngularSpectrum::from_amplitudes(SpectrumMethod::MonteCarlo, params.metric.a, kz_grid, amp);
    if batches > 1 {
        s.stderr = Some(se);
    }
    s.seed = Some(ensemble.seed());
    Ok(s)
}

/// Replica ensemble for [`monte_carlo_replicas`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPlan {
    pub sample_box: SampleBox,
    pub atoms: usize,
    pub replicas: usize,
    pub seed: u64,
    /// `None` uses the flat timed Dicke state.
    pub f_correction: Option<FCorrectionParams>,
}

/// Mean amplitude over independent ensembles; replica `r` uses stream `r` of the seed.
///
/// `stderr` is the standard error of the complex mean, `sqrt(se_re² + se_im²)`;
/// `prob` is the replica mean of `|A_r|²`.
pub fn monte_carlo_replicas(kz_grid: &[f64], params: &SpectrumParams, plan: &ReplicaPlan) -> Result<AngularSpectrum> {
    params.validate()?;
    params.require_oblique()?;
    check_grid(kz_grid)?;
    if plan.replicas < 2 {
        return Err(Error::Invalid("Monte Carlo needs at least two replicas".into()));
    }
    for &kz in kz_grid {
        params.check_mode(kz)?;
    }
    let per_replica = (0..plan.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let ens = Ensemble::sample(plan.sample_box, plan.atoms, plan.seed, r)?;
            let state = match plan.f_correction {
                None => flat_timed_dicke(&ens, &params.k0),
                Some(f) => curved_timed_dicke(&ens, &params.k0, &params.metric, &f)?,
            };
            let rows = ensemble_amplitudes(&ens, &state, kz_grid, params, 1)?;
            Ok(rows.into_iter().map(|(c, _)| c).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let count = plan.replicas as f64;
    let mut amplitude = Vec::with_capacity(kz_grid.len());
    let mut prob = Vec::with_capacity(kz_grid.len());
    let mut stderr = Vec::with_capacity(kz_grid.len());
    for i in 0..kz_grid.len() {
        let mean: Complex64 = per_replica.iter().map(|row| row[i]).sum::<Complex64>() / count;
        let ss: f64 = per_replica.iter().map(|row| (row[i] - mean).norm_sqr()).sum();
        amplitude.push(mean);
        prob.push(per_replica.iter().map(|row| row[i].norm_sqr()).sum::<f64>() / count);
        stderr.push((ss / (count - 1.0) / count).sqrt());
    }
    Ok(AngularSpectrum {
        method: SpectrumMethod::MonteCarlo,
        a: params.metric.a,
        kz_grid: kz_grid.to_vec(),
        amplitude,
        prob,
        stderr: Some(stderr),
        seed: Some(plan.seed),
    })
}

/// `|N⁻¹ Σ_j e^{iΔk·r_j}|²`.
pub fn structure_factor(positions: &[RealVec3], delta_k: &RealVec3) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::Invalid("structure factor needs at least one position".into()));
    }
    let sum: Complex64 = positions
        .iter()
        .map(|r| Complex64::from_polar(1.0, delta_k.dot(r)))
        .sum();
    Ok((sum / positions.len() as f64).norm_sqr().min(1.0))
}

/// Width of the emitted wavevector distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WavevectorSpread {
    /// `(aν/Γ)cos θ0`, the quoted spread.
    pub quoted: f64,
    /// `aν/Γ`, the e-folding constant of `|G|` in `k0z − k_z`.
    pub kernel_decay: f64,
}

pub fn wavevector_spread(params: &SpectrumParams) -> WavevectorSpread {
    let kernel_decay = params.metric.a * params.nu / params.gamma;
    WavevectorSpread {
        quoted: kernel_decay * params.cos_theta0(),
        kernel_decay,
    }
}

/// `δω = a·c·ν·cos θ0/Γ`.
pub fn frequency_spread(params: &SpectrumParams) -> f64 {
    params.metric.a * params.c * params.nu * params.cos_theta0() / params.gamma
}

/// One member of the `a → 0` sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaLimitStep {
    pub a: f64,
    /// `|∫G|/|G|_peak`, which equals the e-folding width of the kernel.
    pub width: f64,
    pub peak: f64,
    pub area: Complex64,
    pub spectrum: AngularSpectrum,
}

/// Kernel at `a, a/2, …, a/2^halvings`, showing the width shrink while the area stays `−i/Γ`.
pub fn flat_delta_limit(
    kz_grid: &[f64],
    params: &SpectrumParams,
    halvings: usize,
    opts: &QuadratureOptions,
) -> Result<Vec<DeltaLimitStep>> {
    params.require_curved()?;
    check_grid(kz_grid)?;
    (0..=halvings)
        .map(|n| {
            let a = params.metric.a / f64::powi(2.0, n as i32);
            let p = params.with_metric(WeakFieldMetric { a, ..params.metric })?;
            let area = kernel_area(&p, opts)?;
            let peak = g_kernel(p.k0z(), &p)?.norm();
            Ok(DeltaLimitStep {
                a,
                width: area.norm() / peak,
                peak,
                area,
                spectrum: analytic_spectrum(kz_grid, &p)?,
            })
        })
        .collect()
}

/// `n` points of detuning `Δ = k0z − k_z` starting at `delta_min` in steps of
/// `step`, returned as increasing `k_z`.
pub fn detuning_grid(params: &SpectrumParams, delta_min: f64, step: f64, n: usize) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite() && delta_min.is_finite()) || n == 0 {
        return Err(Error::Invalid("detuning grid needs n > 0 and a positive step".into()));
    }
    let k0z = params.k0z();
    let mut grid: Vec<f64> = (0..n).map(|i| k0z - (delta_min + step * i as f64)).collect();
    grid.reverse();
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::structure_factor_expectation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scaled(a: f64, theta0: f64) -> SpectrumParams {
        SpectrumParams::from_angles(theta0, 0.4, 1.0, 1e-2, WeakFieldMetric::new(a, 0.0).unwrap(), 0.0, 1.0).unwrap()
    }

    /// Residue evaluation of the full-line integral.
    fn closed_form(kz: f64, p: &SpectrumParams) -> Complex64 {
        let delta = p.k0z() - kz;
        if delta <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let w = p.omega(kz);
        let zp = Complex64::new(
            p.z_mode + 2.0 * (w - p.nu) / (p.metric.a * w),
            p.gamma / (p.metric.a * w),
        );
        Complex64::new(0.0, -4.0 * PI / (p.metric.a * w)) * (Complex64::new(0.0, delta) * zp).exp()
    }

    #[test]
    fn params_validation() {
        let m = WeakFieldMetric::new(1e-3, 0.0).unwrap();
        assert!(SpectrumParams::new(Vector3::new(0.0, 0.0, 2.0), 1.0, 1e-2, m, 0.0, 1.0).is_err());
        assert!(SpectrumParams::new(Vector3::new(0.0, 0.0, 1.0), 1.0, 0.2, m, 0.0, 1.0).is_err());
        assert!(SpectrumParams::new(Vector3::new(0.0, 0.0, 1.0), 1.0, 1e-2, m, 0.0, 1.0).is_ok());
        let p = scaled(1e-3, 0.3);
        assert!((p.theta0() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn kernel_cases() {
        let p = scaled(1e-3, 0.3);
        assert_eq!(g_kernel(p.k0z() + 1e-9, &p).unwrap(), Complex64::new(0.0, 0.0));
        let peak = g_kernel(p.k0z(), &p).unwrap();
        assert!((peak - Complex64::new(0.0, -1.0 / 1e-3)).norm() < 1e-9);
        let flat = scaled(0.0, 0.3);
        assert!(g_kernel(flat.k0z(), &flat).is_err());
    }

    #[test]
    fn kernel_area_is_invariant() {
        for a in [1e-4, 1e-3, 1e-2] {
            let p = scaled(a, 0.3);
            let area = kernel_area(&p, &QuadratureOptions::relative(1e-12)).unwrap();
            let expected = Complex64::new(0.0, -1.0 / p.gamma);
            assert!((area - expected).norm() < 1e-8 * expected.norm(), "a = {a}: {area}");
        }
    }

    #[test]
    fn oracle_full_line_matches_residue() {
        for dispersion in [Dispersion::Resonant, Dispersion::Exact] {
            let p = scaled(1e-2, 0.3).with_dispersion(dispersion);
            let opts = ZIntegralOptions::centered(&p, 1000.0)
                .unwrap()
                .with_tails(TailTreatment::Asymptotic);
            let ell = p.decay_length().unwrap();
            for delta_ell in [-2.0, -0.25, 0.05, 0.5, 2.0, 5.0] {
                let kz = p.k0z() - delta_ell / ell;
                let got = z_integral_oracle(kz, &p, &opts).unwrap();
                let want = closed_form(kz, &p);
                let scale = 4.0 * PI / (p.metric.a * p.nu);
                assert!(
                    (got - want).norm() < 1e-7 * scale,
                    "{dispersion:?} Δℓ={delta_ell}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn oracle_is_one_sided() {
        let p = scaled(1e-3, 0.3).with_dispersion(Dispersion::Resonant);
        let opts = ZIntegralOptions::centered(&p, 1000.0)
            .unwrap()
            .with_tails(TailTreatment::Asymptotic);
        let ell = p.decay_length().unwrap();
        let peak = z_integral_oracle(p.k0z() - 0.1 / ell, &p, &opts).unwrap().norm();
        let mirror = z_integral_oracle(p.k0z() + 5.0 / ell, &p, &opts).unwrap().norm();
        assert!(mirror <= 1e-2 * peak, "{mirror} vs {peak}");
    }

    #[test]
    fn oracle_small_a_is_window_sinc() {
        let p = scaled(1e-12, 0.3);
        let (lo, hi) = (-30.0, 50.0);
        let opts = ZIntegralOptions::window(lo, hi);
        for delta in [0.0, 0.05, 0.3] {
            let kz = p.k0z() - delta;
            let got = z_integral_oracle(kz, &p, &opts).unwrap();
            let den = p.denominator(p.omega(kz), 0.0);
            let l = hi - lo;
            let sinc = if delta == 0.0 {
                1.0
            } else {
                (0.5 * delta * l).sin() / (0.5 * delta * l)
            };
            let want = Complex64::from_polar(l * sinc, 0.5 * delta * (lo + hi)) / den;
            assert!((got - want).norm() < 1e-6 * want.norm().max(1.0), "Δ={delta}");
        }
    }

    #[test]
    fn oracle_rejects_bad_requests() {
        let p = scaled(1e-3, 0.3);
        let opts = ZIntegralOptions::centered(&p, 100.0).unwrap();
        let ell = p.decay_length().unwrap();
        // asymptotic remainder e^{−ΔR} is far above tolerance for ΔR = 5
        assert!(matches!(
            z_integral_oracle(p.k0z() - 0.1 / ell, &p, &opts.with_tails(TailTreatment::Asymptotic)),
            Err(Error::Quadrature { intervals: 0, .. })
        ));
        assert!(z_integral_oracle(p.k0z(), &p, &opts.with_tails(TailTreatment::Asymptotic)).is_err());
        let mut weighted = opts.with_tails(TailTreatment::Asymptotic);
        weighted.volume_weight = true;
        assert!(z_integral_oracle(p.k0z() - 0.1, &p, &weighted).is_err());
        assert!(z_integral_oracle(0.0, &p, &opts).is_err());
        let mut tight = opts;
        tight.max_intervals = 20;
        tight.rel_tol = 1e-15;
        assert!(matches!(
            z_integral_oracle(p.k0z() - 0.1, &p, &tight),
            Err(Error::Quadrature { .. })
        ));
    }

    #[test]
    fn coherent_sum_at_absorbed_direction() {
        let b = SampleBox::cube([0.0; 3], 20.0).unwrap();
        let ens = Ensemble::sample(b, 500, 9, 0).unwrap();
        let p = scaled(0.0, 0.3);
        let state = flat_timed_dicke(&ens, &p.k0);
        let s = monte_carlo_spectrum(&ens, &state, &[p.k0z()], &p, 1).unwrap();
        let den = p.denominator(p.nu, 0.0);
        let normalized = s.prob[0] * den.norm_sqr() / ens.len() as f64;
        assert!((normalized - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_invariant_under_transverse_translation() {
        let b = SampleBox::new([0.0, 0.0, 0.0], [30.0, 30.0, 200.0]).unwrap();
        let ens = Ensemble::sample(b, 2000, 21, 0).unwrap();
        let moved = ens.translated(&Vector3::new(123.4, -56.7, 0.0));
        let p = scaled(1e-3, 0.5);
        let grid = detuning_grid(&p, -0.1, 0.02, 15).unwrap();
        let s1 = monte_carlo_spectrum(&ens, &flat_timed_dicke(&ens, &p.k0), &grid, &p, 4).unwrap();
        let s2 = monte_carlo_spectrum(&moved, &flat_timed_dicke(&moved, &p.k0), &grid, &p, 4).unwrap();
        for (x, y) in s1.prob.iter().zip(&s2.prob) {
            assert!((x - y).abs() <= 1e-12 * x.max(*y), "{x} vs {y}");
        }
    }

    #[test]
    fn batch_stderr_is_reported() {
        let b = SampleBox::cube([0.0; 3], 50.0).unwrap();
        let ens = Ensemble::sample(b, 1000, 2, 0).unwrap();
        let p = scaled(1e-3, 0.3);
        let grid = detuning_grid(&p, 0.01, 0.05, 5).unwrap();
        let s = monte_carlo_spectrum(&ens, &flat_timed_dicke(&ens, &p.k0), &grid, &p, 10).unwrap();
        let se = s.stderr.unwrap();
        assert!(se.iter().all(|v| v.is_finite() && *v > 0.0));
        assert_eq!(s.seed, Some(2));
        let bad = TimedDickeState {
            amplitudes: vec![Complex64::new(1.0, 0.0)],
            k0: p.k0,
        };
        assert!(monte_carlo_spectrum(&ens, &bad, &grid, &p, 1).is_err());
        assert!(monte_carlo_spectrum(&ens, &flat_timed_dicke(&ens, &p.k0), &[], &p, 1).is_err());
    }

    #[test]
    fn replicas_match_oracle_on_small_problem() {
        let p = scaled(1e-3, 0.3);
        let ell = p.decay_length().unwrap();
        let lz = 40.0 * ell;
        let b = SampleBox::new([0.0, 0.0, 0.0], [10.0, 10.0, lz]).unwrap();
        let plan = ReplicaPlan {
            sample_box: b,
            atoms: 4000,
            replicas: 20,
            seed: 17,
            f_correction: None,
        };
        let grid = detuning_grid(&p, -0.5 / ell, 0.5 / ell, 12).unwrap();
        let mc = monte_carlo_replicas(&grid, &p, &plan).unwrap();
        let opts = ZIntegralOptions::window(-0.5 * lz, 0.5 * lz);
        let oracle = quadrature_spectrum(&grid, &p, &opts).unwrap();
        let factor = (plan.atoms as f64).sqrt() / lz;
        let se = mc.stderr.as_ref().unwrap();
        let hits = (0..grid.len())
            .filter(|&i| (mc.amplitude[i] - oracle.amplitude[i] * factor).norm() <= 3.0 * se[i])
            .count();
        assert!(hits >= grid.len() - 1, "{hits}/{}", grid.len());
    }

    #[test]
    fn replicas_are_deterministic_across_pools() {
        let p = scaled(1e-3, 0.3);
        let b = SampleBox::cube([0.0; 3], 100.0).unwrap();
        let plan = ReplicaPlan {
            sample_box: b,
            atoms: 300,
            replicas: 4,
            seed: 5,
            f_correction: None,
        };
        let grid = detuning_grid(&p, 0.0, 0.05, 8).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo_replicas(&grid, &p, &plan).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn structure_factor_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<RealVec3> = (0..100)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()) * 10.0)
            .collect();
        assert_eq!(structure_factor(&pts, &Vector3::zeros()).unwrap(), 1.0);
        assert_eq!(structure_factor(&pts[..1], &Vector3::new(3.0, 1.0, 4.0)).unwrap(), 1.0);
        assert!(structure_factor(&[], &Vector3::zeros()).is_err());
    }

    #[test]
    fn structure_factor_expectation_over_replicas() {
        let n = 40;
        let size = [2.0, 3.0, 1.5];
        let b = SampleBox::new([0.0; 3], size).unwrap();
        let cases = [[0.4, 0.0, 0.0], [1.0, 0.5, 0.2], [5.0, -4.0, 9.0]];
        for dk in cases {
            let v: Vec<f64> = (0..200)
                .map(|r| {
                    let e = Ensemble::sample(b, n, 8, r).unwrap();
                    structure_factor(e.positions(), &Vector3::from(dk)).unwrap()
                })
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            let se = (var / v.len() as f64).sqrt();
            let want = structure_factor_expectation(n, dk, size);
            assert!((mean - want).abs() <= 5.0 * se, "{dk:?}: {mean} vs {want} ± {se}");
        }
    }

    #[test]
    fn flat_emission_is_directional() {
        let n = 1000;
        let edge = 20.0 * 2.0 * PI;
        let b = SampleBox::cube([0.0; 3], edge).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let seeds = 40;
        let mut good = 0;
        for seed in 0..seeds {
            let e = Ensemble::sample(b, n, seed, 0).unwrap();
            let peak = structure_factor(e.positions(), &Vector3::zeros()).unwrap();
            let background: f64 = (0..50)
                .map(|_| {
                    let dir = Vector3::new(
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                    )
                    .normalize();
                    let mag = 20.0 * PI / edge * (1.0 + rng.random::<f64>());
                    structure_factor(e.positions(), &(dir * mag)).unwrap()
                })
                .sum::<f64>()
                / 50.0;
            if peak / background >= 0.5 * n as f64 {
                good += 1;
            }
        }
        assert!(good as f64 >= 0.95 * seeds as f64, "{good}/{seeds}");
    }

    #[test]
    fn spreads() {
        let p = scaled(1e-3, 0.0);
        let w = wavevector_spread(&p);
        assert!((w.quoted - 0.1).abs() < 1e-12 && (w.kernel_decay - 0.1).abs() < 1e-12);
        assert_eq!(wavevector_spread(&scaled(0.0, 0.0)).quoted, 0.0);
        assert!(wavevector_spread(&scaled(1e-3, 0.5 * PI)).quoted.abs() < 1e-15);

        let c = 2.998e8;
        let earth = SpectrumParams::from_angles(0.0, 0.0, 1e15, 1e8, WeakFieldMetric::new(2e-16, 0.0).unwrap(), 0.0, c)
            .unwrap();
        assert!((frequency_spread(&earth) - 0.5996).abs() < 1e-3);
        assert!(frequency_spread(&scaled(1e-3, 0.5 * PI)).abs() < 1e-15);
        assert_eq!(frequency_spread(&scaled(0.0, 0.2)), 0.0);
    }

    #[test]
    fn delta_limit_sequence() {
        let p = scaled(1e-2, 0.3);
        let grid = detuning_grid(&p, -0.5, 0.05, 60).unwrap();
        let steps = flat_delta_limit(&grid, &p, 4, &QuadratureOptions::relative(1e-12)).unwrap();
        assert_eq!(steps.len(), 5);
        for pair in steps.windows(2) {
            assert!((pair[0].width / pair[1].width - 2.0).abs() < 1e-8);
            assert!((pair[1].peak / pair[0].peak - 2.0).abs() < 1e-12);
        }
        for s in &steps {
            assert!((s.area - Complex64::new(0.0, -1.0 / p.gamma)).norm() < 1e-8 / p.gamma);
        }
    }

    #[test]
    fn csv_rows() {
        let p = scaled(1e-3, 0.3);
        let grid = detuning_grid(&p, 0.0, 0.1, 3).unwrap();
        let s = analytic_spectrum(&grid, &p).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SPECTRUM_CSV_HEADER).unwrap();
        s.write_csv(&mut w).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,a,k_z,re_amp,im_amp,prob,stderr");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("analytic,0.001,") && lines[1].ends_with(','));
    }
}
