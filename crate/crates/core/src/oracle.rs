//! Independent reference computations used only to check the library.
//!
//! Nothing here shares code paths with the quantities it verifies.

use crate::error::{Error, Result};

/// Memory-kernel decay of one excited atom coupled to a broad Lorentzian reservoir.
///
/// Solves `ċ(t) = −∫₀ᵗ K(t − s) c(s) ds` with `K(τ) = (Γλ/2) e^{−λτ}`, whose
/// integral is the flat-reservoir rate `Γ/2`. The history integral is advanced
/// by product trapezoid with exact exponential weights and the outer equation by
/// implicit trapezoid. The Markov limit is approached with an error of order `Γ/λ`.
#[derive(Debug, Clone, Copy)]
pub struct VolterraDecay {
    pub gamma: f64,
    /// Reservoir bandwidth in units of `Γ`.
    pub bandwidth_ratio: f64,
    /// Steps per reservoir memory time `1/λ`.
    pub steps_per_memory: f64,
}

impl VolterraDecay {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            bandwidth_ratio: 1e4,
            steps_per_memory: 10.0,
        }
    }

    /// Amplitude `c(t)` on `[0, t_max]`, sampled every `stride` steps.
    pub fn solve(&self, t_max: f64, stride: usize) -> Result<Vec<(f64, f64)>> {
        if !(self.gamma > 0.0 && t_max >= 0.0 && self.bandwidth_ratio > 1.0 && stride > 0) {
            return Err(Error::Invalid("bad Volterra oracle parameters".into()));
        }
        let lambda = self.bandwidth_ratio * self.gamma;
        let kappa = 0.5 * self.gamma * lambda;
        let h = 1.0 / (lambda * self.steps_per_memory);
        let n = (t_max / h).ceil() as usize;

        let e = (-lambda * h).exp();
        let one_minus_e = -(-lambda * h).exp_m1();
        let w1 = 1.0 / lambda - one_minus_e / (lambda * lambda * h);
        let w0 = one_minus_e / lambda - w1;

        let mut c = 1.0;
        let mut hist = 0.0;
        let mut out = vec![(0.0, c)];
        for step in 1..=n {
            let next =
                (c * (1.0 - 0.5 * h * kappa * w0) - 0.5 * h * kappa * (1.0 + e) * hist) / (1.0 + 0.5 * h * kappa * w1);
            hist = e * hist + w0 * c + w1 * next;
            c = next;
            if step % stride == 0 || step == n {
                out.push((step as f64 * h, c));
            }
        }
        Ok(out)
    }
}

/// `sin x / x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Ensemble expectation of the structure factor for `n` atoms uniform in a box:
/// `1/N + (1 − 1/N) Π sinc²(Δk_i L_i / 2)`.
pub fn structure_factor_expectation(n: usize, delta_k: [f64; 3], size: [f64; 3]) -> f64 {
    let inv = 1.0 / n as f64;
    let coherent: f64 = (0..3).map(|i| sinc(0.5 * delta_k[i] * size[i]).powi(2)).product();
    inv + (1.0 - inv) * coherent
}
