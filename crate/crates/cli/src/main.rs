// SPDX-License-Identifier: Apache-2.0

//! `llr`: low-latency region analysis, simulation and allocation from the
//! command line.

mod commands;
mod config;
mod figures;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use manifest::{Outcome, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "llr", version, about = "Low-latency region analysis of a shared best-effort link")]
struct Cli {
    /// Run manifest path; defaults to `<first output>.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean DS delay and queue length against DS load.
    Llr(commands::LlrArgs),
    /// Closed-form max and PFLL allocations.
    Allocate(commands::AllocateArgs),
    /// Simulate the link from a TOML description.
    Simulate(commands::SimulateArgs),
    /// Sweep the NDS rate and estimate both allocations from measured delays.
    Sweep(commands::SweepArgs),
    /// Batch and size statistics of a packet trace.
    TraceStats(commands::TraceStatsArgs),
    /// Generate a synthetic trace for a built-in video profile.
    SynthTrace(commands::SynthTraceArgs),
    /// Write the data behind a closed-form figure.
    Figures(commands::FiguresArgs),
    /// Repeat the run recorded in a manifest.
    Replay {
        /// Manifest written by an earlier run.
        path: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Llr(_) => "llr",
            Command::Allocate(_) => "allocate",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::TraceStats(_) => "trace-stats",
            Command::SynthTrace(_) => "synth-trace",
            Command::Figures(_) => "figures",
            Command::Replay { .. } => "replay",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Domain(llr_core::Error),
    Unstable(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Unstable(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Unstable(m) => f.write_str(m),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<llr_core::Error> for CliError {
    fn from(e: llr_core::Error) -> Self {
        match e {
            llr_core::Error::Unstable { .. } => CliError::Unstable(e.to_string()),
            llr_core::Error::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Domain(other),
        }
    }
}

fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Llr(a) => commands::llr(a),
        Command::Allocate(a) => commands::allocate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::TraceStats(a) => commands::trace_stats(a),
        Command::SynthTrace(a) => commands::synth_trace(a),
        Command::Figures(a) => commands::figures(a),
        Command::Replay { .. } => unreachable!("replay is resolved before dispatch"),
    }
}

/// Runs one parsed command line and writes its manifest.
fn execute(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    let started = Instant::now();
    let outcome = dispatch(&cli.command)?;
    let Some(path) = cli.manifest.clone().or(outcome.default_manifest.clone()) else {
        log::info!("output went to stdout; pass --manifest to record the run");
        return Ok(());
    };
    let working_dir = std::env::current_dir().map_err(|e| CliError::Io(e.to_string()))?;
    let manifest = RunManifest {
        tool: "llr".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cli.command.name().into(),
        args,
        working_dir,
        params: outcome.params,
        seeds: outcome.seeds,
        outputs: outcome.outputs,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    manifest.write(&path)
}

fn replay(path: &Path) -> Result<(), CliError> {
    let m = RunManifest::read(path)?;
    std::env::set_current_dir(&m.working_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", m.working_dir.display())))?;
    let cli = Cli::try_parse_from(std::iter::once("llr".to_string()).chain(m.args.iter().cloned()))
        .map_err(|e| CliError::Config(format!("{}: recorded arguments do not parse: {e}", path.display())))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(CliError::Config("a manifest cannot replay another manifest".into()));
    }
    execute(cli, m.args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay { path } => replay(&path.clone()),
        _ => execute(cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("llr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
