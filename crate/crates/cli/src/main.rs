//! Batch experiment driver for the Gaussian cast model: ingest relation
//! files, train model variants, evaluate cast prediction and versatility,
//! query nearest neighbors, generate planted worlds, and test significance.
//! Every command with a seed is reproducible run to run; reports are TSV
//! with a `#` header line and are replaced atomically on rerun.

mod commands;
mod io;
mod pipeline;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gausscast", version, about = "Gaussian movie/actor/keyword embeddings with persona translations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and filter relation files into a cleaned dataset
    Ingest(commands::ingest::IngestArgs),
    /// Train a model variant and write a checkpoint
    Train(commands::train::TrainArgs),
    /// Cast prediction: mean rank and hits@k on the test split
    EvalCast(commands::eval_cast::EvalCastArgs),
    /// Versatility ranking against expert pairs
    EvalVersatility(commands::eval_versatility::EvalVersatilityArgs),
    /// Nearest actors to a query actor
    Nn(commands::nn::NnArgs),
    /// Generate a planted synthetic world
    Synth(commands::synth::SynthArgs),
    /// Welch's one-tailed t-test between two run reports
    Significance(commands::significance::SignificanceArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::EvalCast(args) => commands::eval_cast::run(args),
        Command::EvalVersatility(args) => commands::eval_versatility::run(args),
        Command::Nn(args) => commands::nn::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Significance(args) => commands::significance::run(args),
    };
    if let Err(e) = result {
        eprintln!("error\t{e:#}");
        std::process::exit(1);
    }
}
