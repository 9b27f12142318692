//! Command-line front end: `build`, `detect`, `evaluate`, `encode`, `synth`.
//!
//! Every command accepts the same flag set; an optional `--config` file of
//! `key=value` lines supplies defaults, and flags given on the command line
//! win. Exit codes: 0 success, 1 data error, 2 missing input, 3 fingerprint
//! mismatch, 4 range error, 64 usage error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_FINGERPRINT: i32 = 3;
pub const EXIT_RANGE: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "nucleo-ids", version, about = "Signature-based intrusion detection over nucleotide-encoded connection records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the encoder on labelled training data and build the signature database.
    Build(CommonArgs),
    /// Classify a dataset and write the alert log.
    Detect(CommonArgs),
    /// Score a labelled dataset and write the false-positive/false-negative series.
    Evaluate(CommonArgs),
    /// Print the nucleotide sequence of every record (debugging aid).
    Encode(CommonArgs),
    /// Generate a synthetic NSL-KDD-shaped corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// key=value file with defaults for any flag below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// exact | substring | weighted
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub levels: Option<u64>,
    /// drop_conflicts | keep_conflicts
    #[arg(long)]
    pub policy: Option<String>,
    /// Comma-separated ascending prefix sizes, e.g. 10000,20000
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub skip_bad: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_log: Option<PathBuf>,
    #[arg(long)]
    pub out_series: Option<PathBuf>,
    /// Emit per-feature-group signatures (for substring mode)
    #[arg(long)]
    pub group_signatures: bool,
    /// Class tie-break order, e.g. dos,probe,r2l,u2r
    #[arg(long)]
    pub priority: Option<String>,
    /// encode: stop after this many records
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args),
        cmd => {
            let (kind, args) = match cmd {
                Command::Build(a) => (commands::Kind::Build, a),
                Command::Detect(a) => (commands::Kind::Detect, a),
                Command::Evaluate(a) => (commands::Kind::Evaluate, a),
                Command::Encode(a) => (commands::Kind::Encode, a),
                Command::Synth(_) => unreachable!(),
            };
            RunConfig::resolve(&args).and_then(|config| commands::dispatch(kind, &config))
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
