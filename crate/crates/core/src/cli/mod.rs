//! Command-line front end: `st-sam <generate|train|eval|predict> --config <path> [--set key=value ...]`.
//!
//! Exit codes: 0 success, 1 usage, 2 data or configuration, 3 numeric failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_eval, cmd_generate, cmd_predict, cmd_train, EvalOutcome, TrainOutcome, FORECAST_HEADER,
};
pub use config::{
    apply_override, DataConfig, EvalConfig, ModelConfig, Partition, Paths, PredictConfig,
    RunConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "st-sam", version, about = "Region inflow/outflow forecasting with spatial-temporal self-attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry by dotted path, e.g. `--set model.d=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset described by the `[synthetic]` section.
    Generate(Common),
    /// Fit a model and write the best checkpoint plus a per-epoch report.
    Train(Common),
    /// Score the checkpoint and both baselines on one partition.
    Eval(Common),
    /// Forecast the slot after `predict.time_index`.
    Predict(Common),
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = (|| {
        let (common, f): (&Common, fn(&RunConfig) -> Result<(), CliError>) = match &cli.command {
            Command::Generate(c) => (c, |cfg| cmd_generate(cfg).map(drop)),
            Command::Train(c) => (c, |cfg| cmd_train(cfg).map(drop)),
            Command::Eval(c) => (c, |cfg| cmd_eval(cfg).map(drop)),
            Command::Predict(c) => (c, |cfg| cmd_predict(cfg).map(drop)),
        };
        let cfg = RunConfig::load(&common.config, &common.overrides)?;
        f(&cfg)
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("st-sam: {e}");
            e.exit_code()
        }
    }
}
