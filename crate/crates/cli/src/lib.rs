//! Command-line workflow: generate synthetic cohorts, train over seeds,
//! evaluate checkpoints, sweep the FIN momentum, and audit prediction files.

pub mod commands;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

/// Environment variable capping the number of worker threads for multi-seed
/// commands. Unset means sequential.
pub const THREADS_ENV: &str = "FIN_EQUITY_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fin_equity::Error),

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn input(path: &Path, message: String) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            message,
        }
    }

    /// 2 for problems with the user's files, flags or configuration, 1 for
    /// internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_user_error() => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fin-equity", version, about = "Fair identity normalization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/eval cohort as dataset CSVs.
    Synth(SynthArgs),
    /// Train one model per seed and aggregate the final-epoch metrics.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and write the metric report.
    Evaluate(EvaluateArgs),
    /// Train over a grid of FIN momentum values.
    SweepMomentum(SweepArgs),
    /// Metric report and histogram from a prediction CSV alone.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic cohort config (JSON); the built-in benchmark when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_eval: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the group names sidecar.
    #[arg(long)]
    pub groups_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON); defaults for every omitted key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    /// Comma-separated seeds; the config seed when omitted.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Prepended to every output file name (`run/` writes into a directory).
    #[arg(long)]
    pub out_prefix: String,
    /// Group names sidecar (`{"groups": [...]}`).
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Decision threshold; the checkpoint's when omitted.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub preds_out: Option<PathBuf>,
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Print percentages instead of fractions (the report file is unaffected).
    #[arg(long)]
    pub percent: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0:1:0.1")]
    pub grid: String,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = fin_equity::metrics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long)]
    pub percent: bool,
}

/// Parses `args` (including the program name), runs the command, and returns
/// the process exit code. Human-readable output goes to `out`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
