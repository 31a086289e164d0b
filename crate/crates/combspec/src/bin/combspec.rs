//! Thin command-line front end: parse arguments, hand off to the library's
//! config, runner, and report plumbing, and map errors to exit codes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 run finished with partial
//! results, 4 replay divergence, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use combspec::config::ExperimentConfig;
use combspec::error::{Error, Result};
use combspec::runner;

#[derive(Parser)]
#[command(name = "combspec", version, about = "Quantum-logic molecular spectrometer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configuration and write its artifact set.
    Run(RunArgs),
    /// Re-execute a completed run and verify its outputs byte for byte.
    Replay {
        /// Run directory or path to its manifest.json.
        target: PathBuf,
    },
    /// Print the human-readable accounting of a completed run.
    Report {
        /// Run directory or path to its manifest.json.
        target: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; takes precedence over the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; takes precedence over the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Independent trials; takes precedence over the config.
    #[arg(long)]
    trials: Option<u32>,
    /// Dotted-path configuration override (for example
    /// `noise.detection_fidelity_bright=0.9`); repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut config = ExperimentConfig::from_toml(&text, &args.overrides)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.run.trials = trials;
    }
    if let Some(out) = &args.out {
        config.run.out = Some(out.display().to_string());
    }
    let resolved = config.resolve()?;
    let out_dir = resolved
        .run
        .out
        .clone()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("combspec-out"));
    let output = runner::run(&resolved, &out_dir)?;
    for trial in &output.results.trials {
        println!(
            "trial {}: confidence {:.3}, simulated {:.1} s",
            trial.trial, trial.result.confidence, trial.result.simulated_s
        );
    }
    println!("wrote {}", output.dir.display());
    if output.partial {
        eprintln!("note: at least one trial ended with partial results");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(target: &PathBuf) -> Result<ExitCode> {
    let report = runner::replay(target)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!("replay verified: {} files byte-identical", report.files_verified);
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(target: &PathBuf) -> Result<ExitCode> {
    print!("{}", runner::report(target)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay { target } => cmd_replay(target),
        Command::Report { target } => cmd_report(target),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
