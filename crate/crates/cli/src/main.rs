mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Loss, Run};
use config::LoadedConfig;
use error::CliError;

/// Train and evaluate load forecasters against dispatch cost.
#[derive(Debug, Parser)]
#[command(name = "adol", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for scenario labeling.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cost increment over a grid of uniform forecast errors.
    Sweep,
    /// Draw forecast and parameter scenarios.
    Sample,
    /// Solve the dispatch problem for every sampled scenario.
    Label,
    /// Fit the cost surrogate on labeled records.
    TrainSurrogate,
    /// Train a forecaster with the chosen loss.
    TrainForecaster {
        #[arg(long, value_enum)]
        loss: Loss,
    },
    /// Evaluate trained forecasters on the test period.
    Evaluate {
        #[arg(long, value_enum)]
        loss: Option<Loss>,
    },
    /// Retrain forecasters under perturbed cost parameters.
    Scenarios,
    /// Bundle stage summaries into a report.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    }
    let cfg = LoadedConfig::from_file(&path)?.with_seed(cli.seed);
    let run = Run::new(cfg, cli.out)?;
    match cli.command {
        Command::Sweep => run.sweep(),
        Command::Sample => run.sample(),
        Command::Label => run.label(),
        Command::TrainSurrogate => run.train_surrogate(),
        Command::TrainForecaster { loss } => run.train_forecaster(loss),
        Command::Evaluate { loss } => run.evaluate(loss),
        Command::Scenarios => run.scenarios(),
        Command::Report => run.report(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
