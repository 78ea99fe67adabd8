// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! `pulseqml` — batch experiment runner for pulse-based QML models.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 unsupported model class, 4 numerical failure, 5 budget exceeded.
//! No environment variables are consulted.

mod commands;
mod config;
mod output;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pulseqml", version, about = "Pulse-based QML experiments: Lie checks, fits, Fliess series, gradient variance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dynamical Lie algebra dimension and controllability verdict.
    CheckLie(CommonArgs),
    /// Subspace-chain test of the expectation-value necessary condition.
    CheckExpressivity(CommonArgs),
    /// Fit a target function with Adam.
    Fit(CommonArgs),
    /// Taylor coefficients of the output in x from the iterated-integral expansion.
    Fliess(CommonArgs),
    /// Gradient-variance sweeps over sizes or layer counts.
    Variance(CommonArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's `seed` (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write an SVG plot.
    #[arg(long)]
    pub svg: bool,
    /// Also write a JSON mirror of the report.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(pulseqml_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use pulseqml_core::Error as E;
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::DegenerateObservable(_) | E::RangeViolation { .. } => 2,
                E::Unsupported(_) => 3,
                E::NumericalIntegrity(_) | E::NonFinite { .. } => 4,
                E::BudgetExceeded { .. } => 5,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<pulseqml_core::Error> for CliError {
    fn from(e: pulseqml_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, cmd): (&CommonArgs, fn(&config::Config, &CommonArgs) -> Result<(), CliError>) = match &cli.command {
        Command::CheckLie(a) => (a, commands::check_lie),
        Command::CheckExpressivity(a) => (a, commands::check_expressivity),
        Command::Fit(a) => (a, commands::fit),
        Command::Fliess(a) => (a, commands::fliess),
        Command::Variance(a) => (a, commands::variance),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    let cfg = config::load(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    cmd(&cfg, args)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pulseqml: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
