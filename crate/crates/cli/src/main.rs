mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "estctl", version, about = "Pulse synthesis and analysis for error-transparent bosonic gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Debug)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bitwise-reproducible output.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a pulse.
    Optimize(CommonArgs),
    /// Δ_QEC, leakage and trajectory mismatch of a pulse.
    Metrics(CommonArgs),
    /// Error-space infidelity versus the time of a photon loss.
    JumpSweep(CommonArgs),
    /// Lossy gate report or repeated-gate process fidelity.
    Experiment(CommonArgs),
    /// Fit a decay model to fidelity-versus-gate-count data.
    Fit(CommonArgs),
    /// Wigner function on a square grid.
    Wigner(CommonArgs),
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Ok,
    /// Finished with a usable result but without meeting its goal.
    Warning(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Optimize(a) => ("optimize", a),
        Command::Metrics(a) => ("metrics", a),
        Command::JumpSweep(a) => ("jump-sweep", a),
        Command::Experiment(a) => ("experiment", a),
        Command::Fit(a) => ("fit", a),
        Command::Wigner(a) => ("wigner", a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(name, args) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Warning(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
