//! `dvt`: data generation, encoding, training, evaluation and the
//! verification reports of the deformable video transformer toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;
mod resolve;

#[derive(Parser, Debug)]
#[command(name = "dvt", version, about = "Deformable video transformer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that reads a `key = value` config.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed; falls back to the config file, then `DVT_SEED`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic moving-square dataset.
    GenData(commands::GenDataArgs),
    /// Encode a clip into a GOP stream and report the round trip.
    Encode(commands::EncodeArgs),
    /// Train a model and write a checkpoint.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(commands::EvalArgs),
    /// Finite-difference gradient check of a (tiny by default) model.
    Gradcheck(commands::GradcheckArgs),
    /// Comparison and multiply-accumulate counts per scheme.
    Flops(commands::FlopsArgs),
    /// Export the sampling trace of one query as JSONL and PPM frames.
    Trace(commands::TraceArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Encode(a) => commands::encode(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Flops(a) => commands::flops(a),
        Command::Trace(a) => commands::trace(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            println!("status = fail");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
