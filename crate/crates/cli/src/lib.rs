//! Command-line workflows over the `brwre` simulator and oracles.
//!
//! [`run_command`] parses arguments, runs one subcommand and maps failures
//! to exit codes: 0 on success, 2 on configuration or usage errors, 3 on
//! numeric aborts (overflow, caps) and I/O failures.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use brwre::sim::Mode;
use brwre::MultiIndex;
use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, EnvChoice};

pub const SUBCOMMANDS: [&str; 8] = [
    "simulate",
    "ensemble",
    "oracle second-moment",
    "oracle quenched-mean",
    "check-condition",
    "pi-d",
    "verify ze",
    "clt-moments",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError { code: 3, message: message.into() }
    }
}

impl From<brwre::Error> for CliError {
    fn from(e: brwre::Error) -> Self {
        CliError { code: if e.is_numeric_abort() { 3 } else { 2 }, message: e.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Parser, Debug)]
#[command(name = "brwre", version, about = "Branching random walks in random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one trajectory and write its statistics CSV.
    Simulate(RunArgs),
    /// Run independent replicas and summarize them per time.
    Ensemble(EnsembleArgs),
    /// Simulation-free computations.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Check the regular-growth condition `alpha * pi_d < 1`.
    CheckCondition(ConditionArgs),
    /// Return probability of the simple random walk.
    PiD(PiArgs),
    /// Exact identity checks.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Survival-conditioned moments of the rescaled density.
    CltMoments(CltArgs),
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Two-walk series u, second_moment and overlap as CSV.
    SecondMoment(RunArgs),
    /// Sitewise quenched mean of the normalized occupation as CSV.
    QuenchedMean(RunArgs),
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Pathwise zeta-representation check over random seeds.
    Ze(ZetaArgs),
}

fn parse_index(s: &str) -> Result<MultiIndex, String> {
    MultiIndex::parse(s).ok_or_else(|| format!("cannot parse multi-index {s:?}, expected e.g. 2,0,0"))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "aggregate" => Ok(Mode::Aggregate),
        "genealogy" => Ok(Mode::Genealogy),
        _ => Err(format!("unknown mode {s:?}, expected aggregate or genealogy")),
    }
}

/// Flags shared by the run-style subcommands. Unset flags fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// JSON or TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset name (env-a, env-b, deterministic) or path to an environment file.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, visible_alias = "dimension")]
    pub dim: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<i64>,
    #[arg(long)]
    pub env_seed: Option<u64>,
    #[arg(long)]
    pub particle_seed: Option<u64>,
    /// aggregate or genealogy.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Moment multi-index such as 2,0,0; repeatable.
    #[arg(long = "moment", value_parser = parse_index)]
    pub moments: Vec<MultiIndex>,
    /// Multi-index of a Y_n statistic; repeatable.
    #[arg(long = "y", value_parser = parse_index)]
    pub y: Vec<MultiIndex>,
    /// Frequency vector of the cosine statistic.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub cos: Option<Vec<f64>>,
    /// Record times, comma separated; every step by default.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<u64>>,
    /// Binomials with more trials than this use the normal approximation.
    #[arg(long)]
    pub exact_threshold: Option<u128>,
    #[arg(long)]
    pub cell_cap: Option<usize>,
    #[arg(long)]
    pub genealogy_cap: Option<usize>,
    #[arg(long)]
    pub dp_radius: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock time in the manifest.
    #[arg(long)]
    pub timing: bool,
}

impl RunArgs {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            dimension: self.dim,
            horizon: self.horizon,
            env: self.env.clone().map(EnvChoice::Name),
            env_seed: self.env_seed,
            particle_seed: self.particle_seed,
            mode: self.mode,
            replicas: None,
            moments: (!self.moments.is_empty()).then(|| self.moments.clone()),
            y: (!self.y.is_empty()).then(|| self.y.clone()),
            cos: self.cos.clone(),
            record_times: self.times.clone(),
            exact_threshold: self.exact_threshold,
            cell_cap: self.cell_cap,
            genealogy_cap: self.genealogy_cap,
            dp_radius: self.dp_radius,
            out_dir: self.out.clone(),
        }
    }

    /// Command defaults, then the config file, then flags.
    pub fn merged(&self, defaults: ConfigFile, replicas: Option<u64>) -> Result<ConfigFile, CliError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let mut flags = self.flags();
        flags.replicas = replicas;
        Ok(defaults.overlay(file).overlay(flags))
    }
}

#[derive(Args, Debug, Clone)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Also write every replica's values to replicas.csv.
    #[arg(long)]
    pub per_replica: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CltArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Replica limit.
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Keep adding replicas until this many survive to the horizon.
    #[arg(long, default_value_t = 0)]
    pub min_survivors: u64,
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ConditionArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Truncation horizon of the Green function series.
    #[arg(long, default_value_t = 10_000)]
    pub budget: usize,
}

#[derive(Args, Debug, Clone)]
pub struct PiArgs {
    #[arg(long, visible_alias = "dimension")]
    pub dim: usize,
    #[arg(long, default_value_t = 10_000)]
    pub budget: usize,
    /// truncated-green or monte-carlo.
    #[arg(long, default_value = "truncated-green")]
    pub method: String,
    #[arg(long, default_value_t = 100_000)]
    pub walks: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ZetaArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of random seed pairs.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("BRWRE_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::config(format!("BRWRE_THREADS={v:?} is not a count")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses and runs one command, returning what it prints on stdout.
pub fn execute<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp
        | clap::error::ErrorKind::DisplayVersion
        | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            CliError { code: if e.exit_code() == 0 { 0 } else { 2 }, message: e.to_string() }
        }
        _ => CliError::config(format!("{}\nvalid subcommands: {}", e.render(), SUBCOMMANDS.join(", "))),
    })?;
    configure_threads()?;
    commands::dispatch(cli.command)
}

/// Entry point of the binary: prints results and returns the exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) if e.code == 0 => {
            print!("{}", e.message);
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            e.code
        }
    }
}
