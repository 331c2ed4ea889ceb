//! Pipeline driver for contrast-trained prefix tuning.
//!
//! Commands cover the whole loop: synthesize a task corpus, pretrain the
//! base model, score candidates, build the contrast dataset, train the
//! prefix, sample completions, and evaluate both arms. Exit codes: 0 on
//! success, 2 for input or environment problems, 3 when training hits
//! non-finite numbers.

mod commands;
mod config;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "prefixtune", version, about = "Contrast-trained prefix tuning pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Configuration file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every stochastic stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for external analyzer runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Skip the likelihood refinement stage after contrast training.
    #[arg(long, global = true)]
    skip_basic: bool,
    /// Generate with the bare base model (baseline arm).
    #[arg(long, global = true)]
    no_prefix: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the task corpus: manifests plus per-task renders
    Synth(commands::synth::SynthArgs),
    /// Train the base model on every rendered candidate
    Pretrain(commands::pretrain::PretrainArgs),
    /// Print a quality score per source file
    Analyze(commands::analyze::AnalyzeArgs),
    /// Build the contrast-pair dataset from per-task candidate files
    BuildDataset(commands::dataset::BuildDatasetArgs),
    /// Fit the prefix: contrast stage, then optional refinement
    Train(commands::train::TrainArgs),
    /// Sample completions per task into files
    Generate(commands::generate::GenerateArgs),
    /// Score sample directories into an evaluation record
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Render stored evaluation records as markdown
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut rc = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        rc.seed = seed;
    }
    if let Some(workers) = cli.global.workers {
        rc.workers = workers;
    }
    if cli.global.skip_basic {
        rc.skip_basic = true;
    }

    match &cli.command {
        Command::Synth(args) => commands::synth::run(&rc, args),
        Command::Pretrain(args) => commands::pretrain::run(&rc, args),
        Command::Analyze(args) => commands::analyze::run(&rc, args),
        Command::BuildDataset(args) => commands::dataset::run(&rc, args),
        Command::Train(args) => commands::train::run(&rc, args),
        Command::Generate(args) => commands::generate::run(&rc, args, cli.global.no_prefix),
        Command::Evaluate(args) => commands::evaluate::run(&rc, args),
        Command::Report(args) => commands::report::run(&rc, args),
    }
}

/// 3 for numeric failures surfaced by the library, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<prefixtune_core::Error>() {
            if matches!(core, prefixtune_core::Error::NonFinite { .. }) {
                return 3;
            }
        }
    }
    2
}
