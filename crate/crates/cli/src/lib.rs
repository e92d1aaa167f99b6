//! Command-line pipeline: synthesize households, train, disaggregate,
//! evaluate and gradient-check.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{parse_entries, parse_overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Convolutional seq2seq energy disaggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Settings {
    /// Flat `key = value` file; keys not accepted by the command are errors.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `--key value` overrides applied after the config file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic household as channel files.
    Synth(Settings),
    /// Train a model on one house and save a checkpoint.
    Train(Settings),
    /// Reconstruct one appliance trace from a house's aggregate.
    Disaggregate(Settings),
    /// Compare a predicted trace with the truth.
    Evaluate(Settings),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(Settings),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Disaggregate(_) => "disaggregate",
            Command::Evaluate(_) => "evaluate",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    pub fn settings(&self) -> &Settings {
        match self {
            Command::Synth(s)
            | Command::Train(s)
            | Command::Disaggregate(s)
            | Command::Evaluate(s)
            | Command::Gradcheck(s) => s,
        }
    }
}

/// Layers defaults, the config file and overrides for `command`.
pub fn resolve(command: &str, settings: &Settings) -> Result<RunConfig, CliError> {
    let defaults =
        commands::defaults(command).ok_or_else(|| CliError::Config(format!("unknown command {command:?}")))?;
    let file = match &settings.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            parse_entries(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Vec::new(),
    };
    let overrides = parse_overrides(&settings.overrides)?;
    RunConfig::resolve(command, &defaults, &file, &overrides)
}

pub fn execute(command: &Command) -> Result<String, CliError> {
    let cfg = resolve(command.name(), command.settings())?;
    match command {
        Command::Synth(_) => commands::cmd_synth(&cfg),
        Command::Train(_) => commands::cmd_train(&cfg),
        Command::Disaggregate(_) => commands::cmd_disaggregate(&cfg),
        Command::Evaluate(_) => commands::cmd_evaluate(&cfg),
        Command::Gradcheck(_) => commands::cmd_gradcheck(&cfg),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&cli.command)
}
