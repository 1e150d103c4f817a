//! `brace-lstm`: generate oracle data, train and sweep LSTM models, check
//! gradients, and emit prediction CSVs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "brace-lstm", version, about = "Deep LSTM surrogates for brace hysteresis")]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the cyclic protocol and oracle force response as CSV.
    Generate(GenerateArgs),
    /// Train one model of the grid.
    Train(TrainArgs),
    /// Train every model of the grid and compare them.
    Sweep(SweepArgs),
    /// Finite-difference check of the BPTT gradients on a random net.
    Gradcheck(GradcheckArgs),
    /// Write true and predicted force for a saved model.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Specimen {
    A,
    B,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Yield displacement.
    #[arg(long)]
    delta_y: Option<f64>,
    /// Oracle parameter preset, replacing the config's [oracle] section.
    #[arg(long, value_enum)]
    specimen: Option<Specimen>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Grid entry, e.g. `Model3a` (case and spaces ignored).
    #[arg(long)]
    model: String,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report JSON; the loss curve goes next to it as `.loss.csv`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Record wall time in the report (otherwise 0, keeping output reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Restrict the sweep to these grid entries.
    #[arg(long = "model")]
    models: Vec<String>,
    /// Record wall times (otherwise 0, keeping artifacts reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 5)]
    lookback: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Check against a backward pass with the cell-state path cut.
    #[arg(long)]
    corrupt: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(brace_lstm::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(e) if e.is_divergence() => 3,
            _ => 2,
        }
    }
}

impl From<brace_lstm::Error> for CliError {
    fn from(e: brace_lstm::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Command::Gradcheck(args) = cli.command {
        return commands::gradcheck(args);
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => commands::generate(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Sweep(a) => commands::sweep(cfg, a),
        Command::Predict(a) => commands::predict(cfg, a),
        Command::Gradcheck(_) => unreachable!(),
    }
    .map(|()| true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
