//! Command-line pipeline: data generation, training, corruption, evaluation and analysis.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Aggregate, RunConfig};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "epic", version, about = "Ensembles of partial point clouds for robust classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sub-samples per sampling mechanism.
    #[arg(long = "k-tilde", global = true)]
    pub k_tilde: Option<usize>,
    /// `mean` or `majority`.
    #[arg(long, global = true)]
    pub aggregate: Option<String>,
    /// Restrict corruption and evaluation to one severity (1-5).
    #[arg(long, global = true)]
    pub severity: Option<String>,
    /// Restrict corruption and evaluation to one corruption family.
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Override any config key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the synthetic train and test sets.
    GenData,
    /// Train the baseline and the three specialists.
    Train,
    /// Write the corrupted test sets.
    Corrupt,
    /// Score all models on clean and corrupted data.
    Eval,
    /// Compare reseeded baselines against the specialist ensemble.
    Diversity,
    /// Per-point importance maps.
    Importance,
    /// Merge stage outputs into one report.
    Report,
    /// Run every stage in order.
    Pipeline,
}

impl Cli {
    /// Builds the effective configuration: defaults, then the file, then flags, then `--set`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("k_tilde", self.k_tilde.map(|v| v.to_string())),
            ("aggregate", self.aggregate.clone()),
            ("severity", self.severity.clone()),
            ("family", self.family.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for item in &self.set {
            let (key, value) =
                item.split_once('=').ok_or_else(|| Error::BadConfig(format!("--set expects KEY=VALUE, got `{item}`")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        let features = cfg.architecture()?.features();
        if features < cfg.classes {
            eprintln!("warning: feature width {features} is below the class count {}", cfg.classes);
        }
        Ok(cfg)
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::GenData => commands::gen_data(cfg),
        Command::Train => commands::train(cfg),
        Command::Corrupt => commands::corrupt(cfg),
        Command::Eval => commands::eval(cfg),
        Command::Diversity => commands::diversity(cfg),
        Command::Importance => commands::importance(cfg),
        Command::Report => commands::report(cfg),
        Command::Pipeline => {
            for stage in [
                Command::GenData,
                Command::Train,
                Command::Corrupt,
                Command::Eval,
                Command::Diversity,
                Command::Importance,
                Command::Report,
            ] {
                execute(stage, cfg)?;
            }
            Ok(())
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
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
    match cli.resolve().and_then(|cfg| execute(cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            1
        }
    }
}
