//! `daef` — train, evaluate, and federate closed-form deep autoencoders for
//! anomaly detection.
//!
//! Exit codes: 2 configuration error, 3 data error, 4 numeric failure,
//! 5 federation session aborted. Results go to stdout, diagnostics to stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use daef::anomaly::AnomalyError;
use daef::data::DataError;
use daef::federation::{FedMode, FederationError};
use daef::model::ModelError;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
    Session(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            CliError::Session(msg) => write!(f, "session aborted: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Session(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InsufficientSamples { .. } | ModelError::ShapeMismatch(_) => {
                CliError::Data(e.to_string())
            }
            ModelError::InvalidArchitecture(_) | ModelError::InvalidParameter(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<AnomalyError> for CliError {
    fn from(e: AnomalyError) -> Self {
        match e {
            AnomalyError::Data(inner) => CliError::Data(inner.to_string()),
            AnomalyError::InsufficientAnomalies { .. }
            | AnomalyError::ShapeMismatch(_)
            | AnomalyError::TooFewSamples { .. } => CliError::Data(e.to_string()),
            AnomalyError::InvalidSpec(_) => CliError::Config(e.to_string()),
            AnomalyError::Model(inner) => CliError::from(inner),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<FederationError> for CliError {
    fn from(e: FederationError) -> Self {
        match e {
            FederationError::SessionAborted(_) | FederationError::NodeTimeout { .. } => {
                CliError::Session(e.to_string())
            }
            FederationError::InvalidParameter(_) => CliError::Config(e.to_string()),
            FederationError::Model(inner) => CliError::from(inner),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "daef",
    about = "Closed-form deep autoencoders for anomaly detection: train, predict, evaluate, and federate without gradient descent",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV (header row, numeric features, one label column).
    #[arg(long)]
    data: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config partition count.
    #[arg(long)]
    partitions: Option<usize>,
    /// Override any config key, e.g. --set architecture.lambda_hidden=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CommonArgs {
    fn load_config(&self) -> Result<RunConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(workers) = self.workers {
            overrides.push(format!("workers={workers}"));
        }
        if let Some(partitions) = self.partitions {
            overrides.push(format!("partitions={partitions}"));
        }
        RunConfig::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on the normal samples and write a model file.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Output model path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated benchmark: per-fold F1 against the labeled data.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate multi-node federated training on a partition of the data.
    Fedsim {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of simulated nodes.
        #[arg(long)]
        nodes: Option<usize>,
        /// Federation mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<FedMode>,
        /// Optionally write the resulting global model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score samples with a trained model: reconstruction error per row.
    Predict {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Input CSV. All columns are numeric features unless --config names
        /// a label column to drop.
        #[arg(long)]
        data: PathBuf,
        /// Output scores CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional run config supplying the dataset label schema.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_mode(raw: &str) -> Result<FedMode, String> {
    match raw {
        "layer_sync" => Ok(FedMode::LayerSync),
        "post_hoc" => Ok(FedMode::PostHoc),
        other => Err(format!(
            "unknown mode {other:?} (expected layer_sync or post_hoc)"
        )),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, out } => {
            let config = common.load_config()?;
            commands::cmd_train(&common.config, &config, &common.data, &out)
        }
        Command::Eval { common, out } => {
            let config = common.load_config()?;
            commands::cmd_eval(&common.config, &config, &common.data, &out)
        }
        Command::Fedsim {
            common,
            nodes,
            mode,
            out,
        } => {
            let config = common.load_config()?;
            let nodes = nodes.unwrap_or(config.federation.nodes);
            let mode = mode.unwrap_or(config.federation.mode);
            if nodes == 0 {
                return Err(CliError::Config("nodes must be at least 1".into()));
            }
            commands::cmd_fedsim(
                &common.config,
                &config,
                &common.data,
                nodes,
                mode,
                out.as_deref(),
            )
        }
        Command::Predict {
            model,
            data,
            out,
            config,
        } => {
            let schema = match config {
                Some(path) => {
                    let loaded = RunConfig::load(&path, &[])?;
                    Some((path, loaded))
                }
                None => None,
            };
            commands::cmd_predict(&model, &data, &out, schema)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
