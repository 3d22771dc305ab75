//! `outflow` command-line driver.
//!
//! Exit codes: 0 success, 1 solver failure, 2 invalid input or usage,
//! 3 solver ran but did not converge (outputs are still written).

mod commands;
mod config;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Flags, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NotConverged(String),
    Solver(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Solver(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::NotConverged(_) => "not-converged",
            CliError::Solver(_) => "solver",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NotConverged(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<outflow_core::Error> for CliError {
    fn from(e: outflow_core::Error) -> Self {
        match e {
            outflow_core::Error::NotConverged { .. } => CliError::NotConverged(e.to_string()),
            e if e.is_validation() => CliError::Validation(e.to_string()),
            e => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "outflow", version, about = "Outlet resistance calibration for blood-flow simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeshKind {
    Arch,
    Bifurcation,
    Channel,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate outlet resistances from measurements
    Calibrate,
    /// Steady Stokes solve at given resistances
    Forward,
    /// Time-dependent run with RCR outlets
    Transient,
    /// 0D RCR network run
    Lumped,
    /// Build a measurement file from a forward or lumped run
    Synthesize,
    /// Merge result files into comparison tables
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Mesh diagnostics
    MeshInfo,
    /// Write a built-in test geometry and its tag map
    MeshGen {
        #[arg(long, value_enum, default_value = "arch")]
        kind: MeshKind,
        /// refinement level
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Forward => "forward",
            Command::Transient => "transient",
            Command::Lumped => "lumped",
            Command::Synthesize => "synthesize",
            Command::Report { .. } => "report",
            Command::MeshInfo => "mesh-info",
            Command::MeshGen { .. } => "mesh-gen",
        }
    }
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
pub fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn report_error(e: &CliError) {
    let json = serde_json::json!({
        "error": { "kind": e.kind(), "message": e.message() },
        "exit_code": e.exit_code(),
    });
    eprintln!("{json}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            report_error(&CliError::validation(e.kind().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = RunConfig::resolve(&cli.flags)?;
    if cli.flags.print_config {
        emit(&(serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n"));
        return Ok(());
    }
    outflow_core::linalg::set_threads(cfg.threads);
    let mut ctx = commands::Context::new(cfg);
    let outcome = match &cli.command {
        Command::Calibrate => commands::calibrate(&mut ctx),
        Command::Forward => commands::forward(&mut ctx),
        Command::Transient => commands::transient(&mut ctx),
        Command::Lumped => commands::lumped(&mut ctx),
        Command::Synthesize => commands::synthesize(&mut ctx),
        Command::Report { inputs } => commands::report(&mut ctx, inputs),
        Command::MeshInfo => commands::mesh_info(&mut ctx),
        Command::MeshGen { kind, n } => commands::mesh_gen(&mut ctx, *kind, *n),
    };
    // a non-converged solve still leaves its outputs and a manifest behind
    let status = match &outcome {
        Ok(()) => "ok",
        Err(CliError::NotConverged(_)) => "not-converged",
        Err(_) => return outcome,
    };
    ctx.timings.insert("total".into(), start.elapsed().as_secs_f64());
    manifest::write(&mut ctx, cli.command.name(), &argv, status)?;
    outcome
}

