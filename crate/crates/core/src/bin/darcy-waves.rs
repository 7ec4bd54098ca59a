use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use darcy_waves::config::{load_config, Mode};
use darcy_waves::run::run;

/// Traveling capillary-gravity waves for Darcy flow.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// What to compute.
    #[arg(value_enum)]
    mode: Mode,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized inputs (verify suite, perturbed initial data).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = load_config(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let outcome = run(cli.mode, &cfg, &out, cli.seed)?;
    eprintln!(
        "{}: {} (manifest {})",
        cli.mode.as_str(),
        outcome.termination.as_deref().unwrap_or(if outcome.success { "ok" } else { "failed" }),
        outcome.manifest.display()
    );
    Ok(outcome.success)
}
