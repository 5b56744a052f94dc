//! Command-line harness: synthetic data, tokenization, staged training,
//! evaluation and reporting, with resumable stages and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gpr_core::pipeline::Stage;

use crate::commands::{Context, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::DirLock;

#[derive(Debug, Parser)]
#[command(name = "gpr", version, about = "Generative ad recommendation pipeline")]
pub struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides GPR_OUT_DIR and the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit RQ-Kmeans and RQ-Kmeans+ on the embedding corpus and score both.
    Tokenize,
    /// Generate the synthetic world, event log and tokenizer corpus.
    SynthData,
    /// Run the enabled training stages, resuming completed ones.
    RunPipeline {
        /// Run only this stage (mtp, vaft or hepo); the previous enabled stage must be done.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Evaluate completed stages or one checkpoint file.
    Eval {
        /// Evaluate only this completed stage.
        #[arg(long)]
        stage: Option<String>,
        /// Evaluate a policy checkpoint file (.gprp); a sibling .gprv is used when present.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Collect reports into a summary and plot data.
    Report,
}

fn parse_stage(s: Option<&str>) -> CliResult<Option<Stage>> {
    s.map(|s| s.parse().map_err(|_| CliError::config(format!("unknown stage {s:?}; use mtp, vaft or hepo"))))
        .transpose()
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .with_seed(cli.seed);
    let ctx = Context::new(cfg, cli.out.as_deref())?;
    let _lock = DirLock::acquire(&ctx.out)?;
    match &cli.command {
        Command::Tokenize => commands::tokenize(&ctx),
        Command::SynthData => commands::synth_data(&ctx),
        Command::RunPipeline { stage } => commands::run_pipeline(&ctx, parse_stage(stage.as_deref())?),
        Command::Eval { stage, checkpoint } => {
            commands::eval(&ctx, parse_stage(stage.as_deref())?, checkpoint.as_deref())
        }
        Command::Report => commands::report(&ctx),
    }
}
