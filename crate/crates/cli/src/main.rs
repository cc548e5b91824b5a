mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdfrac::meshdim::Preset;

use config::{Check, RunConfig};
use run::RunError;

#[derive(Parser)]
#[command(name = "mdfrac", version, about = "Mixed-dimensional Darcy flow with flux mortars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark or a configured problem and write fields and reports.
    Run(RunArgs),
    /// Print the dimensional decomposition and parameters of a preset.
    Describe { preset: String },
    /// Print the JSON schema of run configurations.
    Schema,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Acceptance checks deciding the exit status; repeatable.
    #[arg(long, value_enum)]
    check: Vec<Check>,
}

fn load_config(args: &RunArgs) -> Result<RunConfig, RunError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(RunError::Config)?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = &args.preset {
        cfg.preset = Some(p.parse::<Preset>().map_err(|e| RunError::Config(e.to_string()))?);
    }
    if let Some(l) = args.levels {
        cfg.levels = l;
    }
    if let Some(r) = args.rho {
        cfg.rho = r;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    cfg.checks.extend(&args.check);
    Ok(cfg)
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(value) = std::env::var("MDFRAC_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| RunError::Config(format!("MDFRAC_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| RunError::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<bool, RunError> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let outcome = run::run(&cfg)?;
            for line in &outcome.log {
                println!("{line}");
            }
            for c in &outcome.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                println!("check {}: {verdict}  {}", c.check.name(), c.detail);
            }
            Ok(outcome.passed())
        }
        Command::Describe { preset } => {
            let preset = preset.parse::<Preset>().map_err(|e| RunError::Config(e.to_string()))?;
            print!("{}", run::describe(preset)?);
            Ok(true)
        }
        Command::Schema => {
            println!("{}", config::SCHEMA.trim_end());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("mdfrac: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
