//! Batch driver for the curved-spacetime timed Dicke model.
//!
//! A run is one [`Scenario`](config::Scenario) resolved from a TOML file plus
//! command-line overrides. Results land in the output directory as CSV tables,
//! `resolved_config.toml` (re-runnable as is) and `metadata.json`.

// negated comparisons reject NaN together with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod scenario;

use std::fs;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::config::ResolvedConfig;
use crate::error::CliError;
use crate::scenario::{run_scenario, ScenarioOutput, ABLATION_MAX_SLOPE, MC_MIN_FRACTION, MC_SIGMAS, SLOPE_TOL};

/// Runs the scenario and writes every artifact. A disagreement is reported only
/// after the artifacts are on disk, so a failed check can still be inspected.
pub fn run(cfg: &ResolvedConfig, threads: usize) -> Result<ScenarioOutput, CliError> {
    let out = run_scenario(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    for t in &out.tables {
        fs::write(cfg.output_dir.join(&t.name), &t.body)?;
    }
    fs::write(cfg.output_dir.join("resolved_config.toml"), cfg.to_toml()?)?;

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let metadata = json!({
        "scenario": cfg.scenario.name(),
        "seed": cfg.seed,
        "threads": threads,
        "unix_timestamp": timestamp,
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": cfg.echo(),
        "tolerances": {
            "slope": SLOPE_TOL,
            "ablation_max_slope": ABLATION_MAX_SLOPE,
            "mc_sigmas": MC_SIGMAS,
            "mc_min_fraction": MC_MIN_FRACTION,
            "quadrature_rel_tol": cfg.rel_tol,
        },
        "files": out.tables.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
        "summary": out.summary,
    });
    fs::write(
        cfg.output_dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata)?,
    )?;

    if let Some(msg) = &out.disagreement {
        for line in &out.report {
            println!("{line}");
        }
        return Err(CliError::Disagreement(msg.clone()));
    }
    Ok(out)
}
