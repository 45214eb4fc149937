use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::RunConfig;
use error::CliError;

/// Metric learning with orthogonality-promoting regularizers.
#[derive(Debug, Parser)]
#[command(name = "odml", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training dataset (CSV, label first).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Held-out dataset.
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    /// Model file for `eval`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-mixture dataset.
    Synth,
    /// Train a metric and write the model and epoch log.
    Train,
    /// Score a saved model on a held-out set.
    Eval,
    /// Train and evaluate over a grid of γ (and projection sizes).
    Sweep,
    /// Compare the closed-form proxes against a brute-force solver.
    ProxTest,
    /// Randomized checks of the trace and condition-number inequalities.
    Theory,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
            Command::ProxTest => "prox-test",
            Command::Theory => "theory",
        }
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != cli.command.name() {
            return Err(CliError::Usage(format!("config is for `{c}`, not `{}`", cli.command.name())));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(p) = &cli.data {
        cfg.dataset_path = Some(p.clone());
    }
    if let Some(p) = &cli.test {
        cfg.test_path = Some(p.clone());
    }
    if let Some(p) = &cli.model {
        cfg.model_path = Some(p.clone());
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("OD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("OD_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    init_threads()?;
    let cfg = configure(cli)?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::ProxTest => commands::prox_test(&cfg),
        Command::Theory => commands::theory(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
