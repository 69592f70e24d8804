//! `orclsim` command-line front end: analysis runs, synthetic sessions,
//! report re-rendering and the log schema.

pub mod analyze;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use orclsim_core::events::{emit_report, read_report, ReportFiles};
use orclsim_core::ingest::LogSchema;
use orclsim_core::spatial::RoadNetwork;
use orclsim_core::synthgen::{generate_session, write_session, Scenario, DEFAULT_SCENARIO};

pub use analyze::{cmd_analyze, AnalysisOutput};
pub use config::{Overrides, RunConfig};

pub const THREADS_ENV: &str = "ORCLSIM_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or malformed input; exit 2.
    #[error("{0}")]
    Input(String),
    /// Too many rejected rows; exit 3.
    #[error("{0}")]
    DataQuality(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::DataQuality(_) => 3,
            Self::Internal(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    #[default]
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    pub fn filter(self) -> &'static str {
        match self {
            Self::Error => "error",
            Self::Warn => "warn",
            Self::Info => "info",
            Self::Debug => "debug",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "orclsim", version, about = "Simulator recording analytics")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = LogLevel::Warn, global = true)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect, place and correlate change events for one or more sessions.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic session with a ground-truth manifest.
    Simulate(SimulateArgs),
    /// Re-render tables and the scatter plot from a report.json.
    Report(ReportArgs),
    /// Print the log schema and the configuration keys.
    Schema,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Session descriptor; repeatable, added to those in the config.
    #[arg(long = "session")]
    pub sessions: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Entropy window, seconds.
    #[arg(long)]
    pub window: Option<f64>,
    /// Entropy bin edge, pixels.
    #[arg(long)]
    pub bin_size: Option<f64>,
    /// Correlation tolerance, seconds.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Scenario file; the bundled scenario when omitted.
    #[arg(long, alias = "scenario")]
    pub config: Option<PathBuf>,
    /// Road network; the bundled corridor when omitted.
    #[arg(long)]
    pub road: Option<PathBuf>,
    #[arg(long, default_value = "orclsim-sim")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Existing report.json.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl AnalyzeArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            sessions: self.sessions.clone(),
            out: self.out.clone(),
            seed: self.seed,
            threshold: self.threshold,
            window: self.window,
            bin_size: self.bin_size,
            tolerance: self.tolerance,
        }
    }
}

/// Writes a generated session; returns the session descriptor path.
pub fn cmd_simulate(
    scenario: Option<&Path>,
    road: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<PathBuf, CliError> {
    let input = |e: orclsim_core::Error, p: Option<&Path>| match p {
        Some(p) => CliError::Input(format!("{}: {e}", p.display())),
        None => CliError::Input(e.to_string()),
    };
    let text = match scenario {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => DEFAULT_SCENARIO.to_string(),
    };
    let scenario_def = Scenario::parse(&text).map_err(|e| input(e, scenario))?;
    let network = match road {
        Some(p) => RoadNetwork::load(p).map_err(|e| CliError::Input(e.to_string()))?,
        None => RoadNetwork::corridor_fixture(),
    };
    let seed = seed.unwrap_or(scenario_def.seed);
    let session = generate_session(&scenario_def, &network, seed).map_err(|e| input(e, scenario))?;
    write_session(&session, out).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_report(from: &Path, out: &Path) -> Result<ReportFiles, CliError> {
    let (sessions, summaries, metadata) = read_report(from).map_err(|e| CliError::Input(e.to_string()))?;
    emit_report(&sessions, &summaries, &metadata, out).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_schema() -> String {
    let mut out = LogSchema::current().describe();
    out.push_str("\nconfiguration keys\n");
    for (k, d) in config::CONFIG_KEYS {
        out.push_str(&format!("  {k:<52} {d}\n"));
    }
    out
}

/// Caps the global pool when the thread variable is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Analyze(args) => {
            let cfg = RunConfig::load(args.config.as_deref(), &args.overrides())?;
            let out = cmd_analyze(&cfg)?;
            println!("{}", out.report.report_json.display());
        }
        Command::Simulate(args) => {
            let descriptor = cmd_simulate(args.config.as_deref(), args.road.as_deref(), &args.out, args.seed)?;
            println!("{}", descriptor.display());
        }
        Command::Report(args) => {
            let files = cmd_report(&args.from, &args.out)?;
            println!("{}", files.report_json.display());
        }
        Command::Schema => print!("{}", cmd_schema()),
    }
    Ok(())
}
