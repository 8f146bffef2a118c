//! The `ninn` command-line driver.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration error,
//! 3 data or model error (including incomplete report inputs), 4 schedule
//! mismatch between model step and observation interval.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Config, ConfigError};
pub use manifest::RunManifest;

use crate::error::NinnError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SCHEDULE: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Ninn(NinnError),
    Incomplete(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Ninn(e) => write!(f, "{e}"),
            CliError::Incomplete(m) => write!(f, "incomplete results: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<NinnError> for CliError {
    fn from(e: NinnError) -> Self {
        CliError::Ninn(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Incomplete(_) => EXIT_DATA,
            CliError::Ninn(e) => match e {
                NinnError::ScheduleMismatch(_) => EXIT_SCHEDULE,
                NinnError::InvalidArgument(_) => EXIT_CONFIG,
                NinnError::DimensionMismatch(_)
                | NinnError::VersionMismatch { .. }
                | NinnError::CorruptFile(_)
                | NinnError::Csv(_)
                | NinnError::Io(_) => EXIT_DATA,
                NinnError::Divergence { .. }
                | NinnError::ComponentDivergence { .. }
                | NinnError::IntegrationDivergence { .. } => EXIT_INTERNAL,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ninn",
    version,
    about = "Train ResNet surrogates of chaotic ODEs and assimilate observations with nudging feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the training set and the reference runs.
    GenData(CommonArgs),
    /// Train every configured network on the generated dataset.
    Train(CommonArgs),
    /// Run the configured methods over the μ/Λ grid on the reference runs.
    Assimilate(CommonArgs),
    /// Collect result directories into rmse_table.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Pipeline directory shared by all commands.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Result directories to scan instead of `<out>/assim`.
    dirs: Vec<PathBuf>,
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<(Config, Vec<u8>), CliError> {
    let (mut cfg, bytes) = Config::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok((cfg, bytes))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Ninn(NinnError::Io(std::io::Error::other(e))))?;
            Ok(pool.install(f))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => {
            let (cfg, bytes) = load_config(&a.config, a.seed)?;
            with_jobs(a.jobs, || commands::gen_data(&cfg, &bytes, &a.out))?
        }
        Command::Train(a) => {
            let (cfg, bytes) = load_config(&a.config, a.seed)?;
            with_jobs(a.jobs, || commands::train(&cfg, &bytes, &a.out))?
        }
        Command::Assimilate(a) => {
            let (cfg, bytes) = load_config(&a.config, a.seed)?;
            with_jobs(a.jobs, || commands::assimilate(&cfg, &bytes, &a.out))?
        }
        Command::Report(a) => {
            let cfg = a
                .config
                .as_deref()
                .map(|p| load_config(p, a.seed))
                .transpose()?;
            let complete = with_jobs(a.jobs, || {
                commands::report(
                    cfg.as_ref().map(|(c, b)| (c, b.as_slice())),
                    &a.out,
                    &a.dirs,
                )
            })??;
            if !complete {
                return Err(CliError::Incomplete(
                    "some result directories are missing runs; rows marked incomplete".into(),
                ));
            }
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
