//! Command-line front end: oracle tables, particle estimates, population
//! sweeps and invariant checks, all written as CSV.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;

use config::{parse_config_text, read_config_file, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(scgf_core::Error),
    #[error("runtime error: {0}")]
    Runtime(scgf_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0} invariant check(s) failed")]
    Validation(usize),
}

impl CliError {
    /// 2 for configuration problems, 3 for model problems, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::Runtime(_) | CliError::Io(_) | CliError::Validation(_) => 4,
        }
    }
}

impl From<scgf_core::Error> for CliError {
    fn from(e: scgf_core::Error) -> Self {
        use scgf_core::Error::*;
        match e {
            MalformedSpec(_) | ZeroEscapeRate { .. } | UnknownModel(_) | BadParams(_) | NotIrreducible { .. } | Parse { .. } => {
                CliError::Model(e)
            }
            other => CliError::Runtime(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scgf", version, about = "SCGF oracles and particle estimators for finite Markov jump processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Principal eigenvalue and spectral gap per tilt (oracle.csv).
    Oracle(Options),
    /// Particle estimates against the oracle (estimates.csv).
    Run(Options),
    /// RMSE and bias of m(xi_T)(f) across population sizes (sweep.csv).
    Sweep(Options),
    /// Invariant checks for the configured model.
    Validate(Options),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Registry model: two_state, ring_current or birth_death.
    #[arg(long)]
    pub model: Option<String>,
    /// Model file with [rates], [g] and [h] sections.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Registry model parameter `NAME=VALUE`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Tilt, or comma-separated list of tilts.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    /// Selection threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// meanfield_kc, meanfield_fit or cloning.
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Population size, or comma-separated list.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    /// Fraction of the horizon discarded before averaging.
    #[arg(long)]
    pub burn_in: Option<String>,
    #[arg(long)]
    pub replicas: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial law as a comma-separated probability vector.
    #[arg(long)]
    pub mu0: Option<String>,
    /// Sweep test function as a comma-separated vector.
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<String>,
    /// Replicas of the naive estimator added to `run` output.
    #[arg(long)]
    pub naive_replicas: Option<String>,
    /// Also write oracle marginal trajectories.
    #[arg(long)]
    pub marginals: bool,
    /// Also write the event log of replica 0.
    #[arg(long)]
    pub event_log: bool,
}

impl Options {
    /// Config file keys overridden by the given flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut map: BTreeMap<String, String> = match &self.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        if self.model.is_some() {
            map.remove("model_file");
        }
        if self.model_file.is_some() {
            map.remove("model");
        }
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        set("model", self.model.clone());
        set("model_file", self.model_file.as_ref().map(|p| p.display().to_string()));
        set("k", self.k.clone());
        set("c", self.c.clone());
        set("algorithm", self.algorithm.clone());
        set("n", self.n.clone());
        set("horizon", self.horizon.clone());
        set("burn_in", self.burn_in.clone());
        set("replicas", self.replicas.clone());
        set("seed", self.seed.clone());
        set("threads", self.threads.clone());
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("mu0", self.mu0.clone());
        set("f", self.f.clone());
        set("naive_replicas", self.naive_replicas.clone());
        if self.marginals {
            set("marginals", Some("true".into()));
        }
        if self.event_log {
            set("event_log", Some("true".into()));
        }
        for p in &self.params {
            let (name, value) = p
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--param expects NAME=VALUE, got `{p}`")))?;
            map.insert(format!("param.{}", name.trim()), value.trim().to_string());
        }
        // reuse the file parser's key check for the merged map
        let text: String = map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        ExperimentConfig::from_map(&parse_config_text(&text)?)
    }
}

type CommandFn = fn(&ExperimentConfig) -> Result<Vec<PathBuf>, CliError>;

/// Runs one subcommand inside a pool of the configured size.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (opts, run): (&Options, CommandFn) = match &cli.command {
        Command::Oracle(o) => (o, commands::cmd_oracle),
        Command::Run(o) => (o, commands::cmd_run),
        Command::Sweep(o) => (o, commands::cmd_sweep),
        Command::Validate(o) => (o, commands::cmd_validate),
    };
    let cfg = opts.resolve()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {:?} worker threads: {e}", cfg.threads)))?;
    pool.install(|| run(&cfg))
}
