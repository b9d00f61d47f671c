//! `dpcer` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 numerical failure.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpcer::ErrorKind;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<dpcer::Error> for CliError {
    fn from(e: dpcer::Error) -> Self {
        match e.kind() {
            ErrorKind::Usage => CliError::Usage(e.to_string()),
            ErrorKind::Data => CliError::Data(e.to_string()),
            ErrorKind::Numerical => CliError::Numerical(e.to_string()),
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(name = "dpcer", version, about = "Clustering, density estimation and prediction for populations of labeled graphs")]
struct Cli {
    /// Worker threads for data-parallel work; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that reads a run configuration.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Config file: a JSON object or `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set n_iter=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<config::RunConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        config::RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the Gibbs sampler; writes trace.csv, atoms.csv and manifest.json.
    Fit(commands::FitArgs),
    /// Point-estimate the partition from a fit by minimizing expected VI.
    Cluster(commands::ClusterArgs),
    /// Cluster-specific predictive tables, predictive samples and checks.
    Predict(commands::PredictArgs),
    /// Simulate a dataset (or a replicated study) from a mixture scenario.
    Simulate(commands::SimulateArgs),
    /// Consensus fit over node blocks, with an optional N_sub diagnostic.
    Consensus(commands::ConsensusArgs),
    /// Clustering metrics against a reference, and network summaries.
    Metrics(commands::MetricsArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&a, cli.workers),
        Command::Cluster(a) => commands::cluster(&a, cli.workers),
        Command::Predict(a) => commands::predict(&a, cli.workers),
        Command::Simulate(a) => commands::simulate(&a, cli.workers),
        Command::Consensus(a) => commands::consensus(&a, cli.workers),
        Command::Metrics(a) => commands::metrics(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
