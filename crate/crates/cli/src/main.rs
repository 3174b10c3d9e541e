use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use timed_dicke_cli::config::{Overrides, ResolvedConfig, RunConfig, Scenario};
use timed_dicke_cli::error::CliError;

/// Timed Dicke emission in a weak uniform gravitational field.
#[derive(Debug, Parser)]
#[command(name = "timed-dicke", version)]
struct Args {
    /// TOML run configuration. Without it every parameter takes its default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of verify-modes, flat-dicke, curved-spectrum, spreads, delta-limit.
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn execute(args: Args) -> Result<(), CliError> {
    let raw = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let over = Overrides {
        scenario: args.scenario,
        seed: args.seed,
        output_dir: args.output,
    };
    let cfg = ResolvedConfig::resolve(&raw, &over)?;
    if args.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = pool.install(|| timed_dicke_cli::run(&cfg, args.threads))?;
    for line in &out.report {
        println!("{line}");
    }
    println!("wrote results to {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.report());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
