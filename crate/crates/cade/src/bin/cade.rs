//! Thin command-line front end over the pipeline. All behaviour lives in
//! the library; this binary parses flags, applies overrides and maps
//! errors to exit codes (1 config, 2 data, 3 endpoint).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cade::config::ExperimentConfig;
use cade::error::Error;
use cade::pipeline::{Runtime, Stage};

#[derive(Parser)]
#[command(
    name = "cade",
    version,
    about = "Appraisal-distribution estimation benchmark"
)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override [run].workers.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override [run].cache_dir.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Override [run].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override [run].out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline.
    Run {
        /// Stop after this stage (ingest, grid-temp, sample, calibrate,
        /// eval, analyze).
        #[arg(long)]
        stage: Option<String>,
    },
    /// Parse the dataset and write records, multisets and rejects.
    Ingest,
    /// Collect rating samples and write predictions.
    Sample,
    /// Build calibrated predictions (avg-conf or pair-rank).
    Calibrate,
    /// Score predictions against the human multisets.
    Eval,
    /// Rankings, modality census, group variance, significance.
    Analyze {
        /// Profile field for the group-variance table (gender, ethnicity,
        /// origin, education, trait).
        #[arg(long)]
        group_by: Option<String>,
    },
    /// Search the sampling-temperature grid and record the selection.
    GridTemp,
}

fn load_runtime(cli: &Cli) -> Result<Runtime, Error> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let (mut config, hash) = ExperimentConfig::load(config_path)?;
    if let Some(workers) = cli.workers {
        config.run.workers = workers.max(1);
    }
    if let Some(cache_dir) = &cli.cache_dir {
        config.run.cache_dir = cache_dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.run.out_dir = out.clone();
    }
    Runtime::new(config, hash)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let mut runtime = load_runtime(&cli)?;
    match &cli.command {
        Command::Run { stage } => {
            let upto = stage.as_deref().map(Stage::parse).transpose()?;
            runtime.run(upto)?;
        }
        Command::Ingest => runtime.run_stage(Stage::Ingest)?,
        Command::Sample => runtime.run_stage(Stage::Predict)?,
        Command::Calibrate => runtime.run_stage(Stage::Calibrate)?,
        Command::Eval => runtime.run_stage(Stage::Eval)?,
        Command::Analyze { group_by } => {
            if let Some(field) = group_by {
                runtime.config.analysis.group_by = Some(field.clone());
            }
            runtime.run_stage(Stage::Analyze)?;
        }
        Command::GridTemp => runtime.run_stage(Stage::GridTemp)?,
    }
    for warning in runtime.warnings() {
        eprintln!("warning: {warning}");
    }
    eprintln!("artifacts written to {}", runtime.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // variant displays already carry their source context
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2))
        }
    }
}
