use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedscan_cli::{commands, CliError, RunConfig};

/// Federated hemorrhage-classification simulator.
///
/// Exit status: 0 success, 1 invalid configuration or input, 2 I/O or file
/// format failure, 3 numeric failure or failed gradient check.
#[derive(Parser)]
#[command(name = "fedscan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration. Without it every key takes its default.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set federation.lr=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic volumes and a manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Target directory; defaults to output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split the training volumes across clients and write the shards.
    Partition {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on the whole training split with one worker.
    TrainCentral {
        #[command(flatten)]
        common: Common,
    },
    /// Federated training across the configured clients.
    TrainFed {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a directory written by gen-data.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        /// Manifest split to score: train, eval or all.
        #[arg(long, default_value = "eval")]
        split: String,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    RunConfig::load(common.config.as_deref(), &common.overrides)
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common, out: dir } => {
            let config = load(&common)?;
            let dir = dir.unwrap_or_else(|| config.output.dir.clone());
            commands::gen_data(&config, &dir, out)
        }
        Command::Partition { common, out: dir } => {
            let config = load(&common)?;
            let dir = dir.unwrap_or_else(|| config.output.dir.clone());
            commands::partition(&config, &dir, out)
        }
        Command::TrainCentral { common } => commands::train_central(&load(&common)?, out),
        Command::TrainFed { common } => commands::train_fed(&load(&common)?, out),
        Command::Evaluate { common, checkpoint, data_dir, split } => {
            commands::evaluate(&load(&common)?, &checkpoint, &data_dir, &split, out)
        }
        Command::Gradcheck { common, corrupt_gradient } => commands::gradcheck(&load(&common)?, corrupt_gradient, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
