//! Experiment runner for decentralized dual averaging: configuration,
//! orchestration and metric export.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Overrides};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dda", version, about = "Decentralized dual averaging experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the step-size analysis for a configuration.
    Check(CommonArgs),
    /// Run the configured methods and write traces.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write an SVG chart of log-RSE.
        #[arg(long)]
        svg: bool,
    },
    /// Solve for the reference minimizer (cached by problem hash).
    Reference(CommonArgs),
    /// Run dual averaging over a grid of step sizes.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated methods: dda, cdda, pg_extra, p2d2, dsm.
    #[arg(long)]
    pub algos: Option<String>,
    /// Number of rounds.
    #[arg(long = "T", value_name = "ROUNDS")]
    pub rounds: Option<usize>,
}

impl CommonArgs {
    pub fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let overrides =
            Overrides { seed: self.seed, out: self.out.clone(), algos: self.algos.clone(), rounds: self.rounds };
        overrides.apply(&mut cfg)?;
        Ok(cfg)
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Check(args) => args.load().and_then(commands::check).map(|_| 0),
        Command::Run { common, svg } => common.load().and_then(|cfg| commands::run(cfg, svg)).map(|s| s.exit_code()),
        Command::Reference(args) => args.load().and_then(commands::reference).map(|_| 0),
        Command::Sweep(args) => args.load().and_then(commands::sweep).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
