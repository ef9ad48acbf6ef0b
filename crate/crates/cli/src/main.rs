//! `vidpower`: simulate, sweep, compare, calibrate and validate video playback
//! power timelines.
//!
//! Exit codes: 0 ok, 1 runtime error, 2 invalid config or usage. Config
//! violations are printed to stderr as one JSON object per line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vidpower::model::Violation;

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "vidpower", version, about = "Package C-state timelines and energy for video playback pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one workload and write report and timeline files.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Dirty-fraction trace; switches to single-plane bursting.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a resolution × FPS × scheme × overlay grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Side-by-side comparison of two workloads.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: CompareArgs,
    },
    /// Fit state powers from measured runs.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: CalibrateArgs,
    },
    /// Check the analytic timelines against the fixed-tick oracle.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        args: ValidateArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Workload config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in workload, e.g. measured-baseline or 4k60-burstlink.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Calibration file overriding the preset's or config's.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Seed for synthetic data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of frame windows to simulate.
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Built-in grid: schemes, vr, fbc or batching (default schemes).
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First workload: preset name or config path.
    pub a: String,
    /// Second workload: preset name or config path.
    pub b: String,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Measured runs CSV: label, one residency column per state, power_mw, optional bw.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Generate this many synthetic runs from the template profile instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Relative noise on synthetic measured power.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// States to fit, comma separated (default: every state with residency).
    #[arg(long)]
    pub states: Option<String>,
    /// Scheme whose profile receives the fitted powers.
    #[arg(long, default_value = "baseline")]
    pub profile: String,
    /// Refit the shipped default calibration against its reduction targets.
    #[arg(long)]
    pub fit_default: bool,
    #[arg(long, default_value_t = 400)]
    pub rounds: usize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Oracle tick in seconds.
    #[arg(long, default_value_t = 1e-6)]
    pub tick: f64,
    #[arg(long, default_value_t = 0.1)]
    pub energy_tol_pct: f64,
    #[arg(long, default_value_t = 0.1)]
    pub residency_tol_pp: f64,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Violations(Vec<Violation>),
    Runtime(String),
}

impl From<vidpower::Error> for CliError {
    fn from(e: vidpower::Error) -> Self {
        match e {
            vidpower::Error::Violations(v) => CliError::Violations(v),
            vidpower::Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate { common, trace } => commands::simulate(&common, trace.as_deref()).map(|_| true),
        Command::Sweep { common, args } => commands::sweep(&common, &args).map(|_| true),
        Command::Compare { common, args } => commands::compare(&common, &args).map(|_| true),
        Command::Calibrate { common, args } => commands::calibrate(&common, &args).map(|_| true),
        Command::Validate { common, args } => commands::validate(&common, &args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Violations(v)) => {
            for x in &v {
                eprintln!("{}", serde_json::to_string(x).expect("violation serializes"));
            }
            eprintln!("error: config violates {} invariant(s)", v.len());
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
