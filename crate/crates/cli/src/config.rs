//! Run configuration.
//!
//! A TOML file with optional sections; every key is checked against the schema
//! and unknown keys are rejected. Missing values fall back to defaults chosen by
//! `unit_regime`. The fully resolved configuration is echoed next to the output.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use timed_dicke::metric::{surface_param_a, PhysicalConstants};
use timed_dicke::spectrum::Dispersion;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    VerifyModes,
    FlatDicke,
    CurvedSpectrum,
    Spreads,
    DeltaLimit,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::VerifyModes,
        Scenario::FlatDicke,
        Scenario::CurvedSpectrum,
        Scenario::Spreads,
        Scenario::DeltaLimit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::VerifyModes => "verify-modes",
            Scenario::FlatDicke => "flat-dicke",
            Scenario::CurvedSpectrum => "curved-spectrum",
            Scenario::Spreads => "spreads",
            Scenario::DeltaLimit => "delta-limit",
        }
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitRegime {
    Si,
    #[default]
    Scaled,
}

/// Overrides for the physical constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub c: Option<f64>,
    pub hbar: Option<f64>,
    pub eps0: Option<f64>,
    pub g_newton: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    /// Transition angular frequency.
    pub nu: Option<f64>,
    pub gamma: Option<f64>,
    /// Gravity parameter; exclusive with `g`.
    pub a: Option<f64>,
    /// Free-fall acceleration, converted to `a = 2g/c²`.
    pub g: Option<f64>,
    pub z0: Option<f64>,
    pub z_mode: Option<f64>,
    pub theta0: Option<f64>,
    pub phi0: Option<f64>,
    pub dispersion: Option<Dispersion>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub atoms: Option<usize>,
    pub replicas: Option<usize>,
    pub box_size: Option<[f64; 3]>,
    pub box_center: Option<[f64; 3]>,
    /// `F{ζ} = βζ + iγζ²` coefficients; absent means the flat timed Dicke state.
    pub beta: Option<f64>,
    pub gamma_coef: Option<f64>,
}

/// Detuning grid `Δ = k0z − k_z` in units of the inverse decay length `aν/Γ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub delta_min: Option<f64>,
    pub delta_step: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilSection {
    pub h: Option<f64>,
    pub order: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub modes: Option<usize>,
    pub a_values: Option<Vec<f64>>,
    pub min_cos: Option<f64>,
    pub k_magnitude: Option<f64>,
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatSection {
    /// Cube edge in wavelengths `2π/|k0|`.
    pub edge_wavelengths: Option<f64>,
    /// Number of random off-peak `Δk`.
    pub offsets: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSection {
    pub halvings: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub rel_tol: Option<f64>,
}

/// The file as written by the user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub unit_regime: Option<UnitRegime>,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub stencil: StencilSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub flat: FlatSection,
    #[serde(default)]
    pub delta: DeltaSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedPhysics {
    pub nu: f64,
    pub gamma: f64,
    pub a: f64,
    pub z0: f64,
    pub z_mode: f64,
    pub theta0: f64,
    pub phi0: f64,
    pub dispersion: Dispersion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedEnsemble {
    pub atoms: usize,
    pub replicas: usize,
    pub box_size: [f64; 3],
    pub box_center: [f64; 3],
    pub beta: Option<f64>,
    pub gamma_coef: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedGrid {
    pub delta_min: f64,
    pub delta_step: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedVerify {
    pub modes: usize,
    pub a_values: Vec<f64>,
    pub min_cos: f64,
    pub k_magnitude: f64,
    pub volume: f64,
    pub h: f64,
    pub order: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedFlat {
    pub edge_wavelengths: f64,
    pub offsets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedConstants {
    pub c: f64,
    pub hbar: f64,
    pub eps0: f64,
    pub g_newton: f64,
}

impl From<ResolvedConstants> for PhysicalConstants {
    fn from(c: ResolvedConstants) -> Self {
        PhysicalConstants {
            c: c.c,
            hbar: c.hbar,
            eps0: c.eps0,
            g_newton: c.g_newton,
        }
    }
}

/// Every parameter of a run after defaults and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub unit_regime: UnitRegime,
    pub constants: ResolvedConstants,
    pub physics: ResolvedPhysics,
    pub ensemble: ResolvedEnsemble,
    pub grid: ResolvedGrid,
    pub verify: ResolvedVerify,
    pub flat: ResolvedFlat,
    pub halvings: usize,
    pub rel_tol: f64,
}

impl ResolvedConfig {
    pub fn resolve(raw: &RunConfig, over: &Overrides) -> Result<Self, CliError> {
        let scenario = over
            .scenario
            .or(raw.scenario)
            .ok_or_else(|| CliError::Config("no scenario given in the config or on the command line".into()))?;
        let regime = raw.unit_regime.unwrap_or_default();
        let base = match regime {
            UnitRegime::Si => PhysicalConstants::si(),
            UnitRegime::Scaled => PhysicalConstants::scaled(),
        };
        let cs = &raw.constants;
        let constants = ResolvedConstants {
            c: cs.c.unwrap_or(base.c),
            hbar: cs.hbar.unwrap_or(base.hbar),
            eps0: cs.eps0.unwrap_or(base.eps0),
            g_newton: cs.g_newton.unwrap_or(base.g_newton),
        };
        PhysicalConstants::from(constants).validate()?;

        let ph = &raw.physics;
        let (nu_d, gamma_d, a_d) = match regime {
            UnitRegime::Si => (1e15, 1e8, 2e-16),
            UnitRegime::Scaled => (1.0, 1e-2, 1e-3),
        };
        let a = match (ph.a, ph.g) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either physics.a or physics.g, not both".into())),
            (Some(a), None) => a,
            (None, Some(g)) => surface_param_a(g, &constants.into())?,
            (None, None) => a_d,
        };
        let physics = ResolvedPhysics {
            nu: ph.nu.unwrap_or(nu_d),
            gamma: ph.gamma.unwrap_or(gamma_d),
            a,
            z0: ph.z0.unwrap_or(0.0),
            z_mode: ph.z_mode.unwrap_or(0.0),
            theta0: ph.theta0.unwrap_or(match scenario {
                Scenario::Spreads => 0.0,
                _ => 0.3,
            }),
            phi0: ph.phi0.unwrap_or(0.0),
            dispersion: ph.dispersion.unwrap_or_default(),
        };

        let en = &raw.ensemble;
        let k0 = physics.nu / constants.c;
        let default_box = match scenario {
            Scenario::FlatDicke => {
                let edge = raw.flat.edge_wavelengths.unwrap_or(100.0) * 2.0 * std::f64::consts::PI / k0;
                [edge; 3]
            }
            _ => {
                // 100 decay lengths tall; the transverse extent drops out of the k_z marginal
                let ell = if a > 0.0 { physics.gamma / (a * physics.nu) } else { 1.0 };
                [10.0 / k0, 10.0 / k0, 100.0 * ell]
            }
        };
        let ensemble = ResolvedEnsemble {
            atoms: en.atoms.unwrap_or(match scenario {
                Scenario::CurvedSpectrum => 100_000,
                _ => 10_000,
            }),
            replicas: en.replicas.unwrap_or(20),
            box_size: en.box_size.unwrap_or(default_box),
            box_center: en.box_center.unwrap_or([0.0, 0.0, physics.z0]),
            beta: en.beta,
            gamma_coef: en.gamma_coef,
        };

        let grid = ResolvedGrid {
            delta_min: raw.grid.delta_min.unwrap_or(-2.95),
            delta_step: raw.grid.delta_step.unwrap_or(0.1),
            points: raw.grid.points.unwrap_or(110),
        };

        let v = &raw.verify;
        let verify = ResolvedVerify {
            modes: v.modes.unwrap_or(10),
            a_values: v.a_values.clone().unwrap_or_else(|| vec![1e-4, 1e-3, 1e-2]),
            min_cos: v.min_cos.unwrap_or(0.1),
            k_magnitude: v.k_magnitude.unwrap_or(1.0),
            volume: v.volume.unwrap_or(0.5),
            h: raw.stencil.h.unwrap_or(5e-3),
            order: raw.stencil.order.unwrap_or(4),
        };
        let flat = ResolvedFlat {
            edge_wavelengths: raw.flat.edge_wavelengths.unwrap_or(100.0),
            offsets: raw.flat.offsets.unwrap_or(50),
        };

        let resolved = Self {
            scenario,
            seed: over.seed.or(raw.seed).unwrap_or(0),
            output_dir: over
                .output_dir
                .clone()
                .or_else(|| raw.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            unit_regime: regime,
            constants,
            physics,
            ensemble,
            grid,
            verify,
            flat,
            halvings: raw.delta.halvings.unwrap_or(6),
            rel_tol: raw.quadrature.rel_tol.unwrap_or(1e-9),
        };
        resolved.validate()?;
        Ok(resolved)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        if self.ensemble.atoms == 0 {
            return bad("ensemble.atoms must be >= 1");
        }
        if self.ensemble.replicas < 2 && self.scenario == Scenario::CurvedSpectrum {
            return bad("ensemble.replicas must be >= 2");
        }
        if self.grid.points == 0 || !(self.grid.delta_step > 0.0) {
            return bad("grid needs points >= 1 and delta_step > 0");
        }
        if self.verify.a_values.len() < 2 || self.verify.a_values.iter().any(|a| !(*a > 0.0)) {
            return bad("verify.a_values needs at least two positive entries");
        }
        if !(self.verify.min_cos > 0.0 && self.verify.min_cos <= 1.0) {
            return bad("verify.min_cos must lie in (0, 1]");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return bad("quadrature.rel_tol must lie in (0, 1)");
        }
        if self.flat.offsets == 0 {
            return bad("flat.offsets must be >= 1");
        }
        Ok(())
    }

    /// The resolved values written back in the input schema, so the echo can be rerun.
    pub fn echo(&self) -> RunConfig {
        let c = self.constants;
        let p = self.physics;
        let e = self.ensemble;
        RunConfig {
            scenario: Some(self.scenario),
            seed: Some(self.seed),
            output_dir: Some(self.output_dir.clone()),
            unit_regime: Some(self.unit_regime),
            constants: ConstantsSection {
                c: Some(c.c),
                hbar: Some(c.hbar),
                eps0: Some(c.eps0),
                g_newton: Some(c.g_newton),
            },
            physics: PhysicsSection {
                nu: Some(p.nu),
                gamma: Some(p.gamma),
                a: Some(p.a),
                g: None,
                z0: Some(p.z0),
                z_mode: Some(p.z_mode),
                theta0: Some(p.theta0),
                phi0: Some(p.phi0),
                dispersion: Some(p.dispersion),
            },
            ensemble: EnsembleSection {
                atoms: Some(e.atoms),
                replicas: Some(e.replicas),
                box_size: Some(e.box_size),
                box_center: Some(e.box_center),
                beta: e.beta,
                gamma_coef: e.gamma_coef,
            },
            grid: GridSection {
                delta_min: Some(self.grid.delta_min),
                delta_step: Some(self.grid.delta_step),
                points: Some(self.grid.points),
            },
            stencil: StencilSection {
                h: Some(self.verify.h),
                order: Some(self.verify.order),
            },
            verify: VerifySection {
                modes: Some(self.verify.modes),
                a_values: Some(self.verify.a_values.clone()),
                min_cos: Some(self.verify.min_cos),
                k_magnitude: Some(self.verify.k_magnitude),
                volume: Some(self.verify.volume),
            },
            flat: FlatSection {
                edge_wavelengths: Some(self.flat.edge_wavelengths),
                offsets: Some(self.flat.offsets),
            },
            delta: DeltaSection {
                halvings: Some(self.halvings),
            },
            quadrature: QuadratureSection {
                rel_tol: Some(self.rel_tol),
            },
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(&self.echo()).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("scenario = \"spreads\"\nsed = 3\n").is_err());
        assert!(RunConfig::from_toml("[physics]\nnuu = 1.0\n").is_err());
        assert!(RunConfig::from_toml("scenario = \"nope\"\n").is_err());
    }

    #[test]
    fn defaults_follow_regime() {
        let raw = RunConfig::from_toml("scenario = \"spreads\"\nunit_regime = \"si\"\n").unwrap();
        let r = ResolvedConfig::resolve(&raw, &Overrides::default()).unwrap();
        assert_eq!(r.physics.nu, 1e15);
        assert_eq!(r.constants.c, 299_792_458.0);
        let raw = RunConfig::from_toml("scenario = \"spreads\"\n").unwrap();
        let r = ResolvedConfig::resolve(&raw, &Overrides::default()).unwrap();
        assert_eq!(r.constants.c, 1.0);
    }

    #[test]
    fn command_line_wins() {
        let raw = RunConfig::from_toml("scenario = \"spreads\"\nseed = 4\noutput_dir = \"a\"\n").unwrap();
        let over = Overrides {
            scenario: Some(Scenario::DeltaLimit),
            seed: Some(9),
            output_dir: Some("b".into()),
        };
        let r = ResolvedConfig::resolve(&raw, &over).unwrap();
        assert_eq!((r.scenario, r.seed), (Scenario::DeltaLimit, 9));
        assert_eq!(r.output_dir, PathBuf::from("b"));
    }

    #[test]
    fn gravity_from_acceleration() {
        let raw = RunConfig::from_toml("scenario = \"spreads\"\n[physics]\ng = 0.5\n").unwrap();
        let r = ResolvedConfig::resolve(&raw, &Overrides::default()).unwrap();
        assert!((r.physics.a - 1.0).abs() < 1e-15);
        let both = RunConfig::from_toml("scenario = \"spreads\"\n[physics]\ng = 0.5\na = 1.0\n").unwrap();
        assert!(ResolvedConfig::resolve(&both, &Overrides::default()).is_err());
    }

    #[test]
    fn missing_scenario_is_an_error() {
        assert!(ResolvedConfig::resolve(&RunConfig::default(), &Overrides::default()).is_err());
    }

    #[test]
    fn echo_round_trips_through_toml() {
        let raw = RunConfig::from_toml("scenario = \"curved-spectrum\"\n").unwrap();
        let r = ResolvedConfig::resolve(&raw, &Overrides::default()).unwrap();
        let text = r.to_toml().unwrap();
        assert!(text.contains("scenario = \"curved-spectrum\""));
        let again = ResolvedConfig::resolve(&RunConfig::from_toml(&text).unwrap(), &Overrides::default()).unwrap();
        assert_eq!(again, r);
    }
}
