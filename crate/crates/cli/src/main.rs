use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod model_file;

#[derive(Debug, Parser)]
#[command(name = "gph", version, about = "Generalized phase-type distributions from two-speed Markov mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    Survival,
    Density,
    ForwardIntensity,
    InstantIntensity,
    Baseline,
    Residual,
    Occupation,
    SubDist,
    CauseIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Single,
    Competing,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file and summarize its spectrum.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a quantity on a grid and write CSV.
    Eval(commands::EvalArgs),
    /// Simulate paths and write them in the path-record format.
    Simulate(commands::SimulateArgs),
    /// Estimate rates from a path file.
    Estimate {
        /// Path file, one path per line.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the marriage/divorce curve bundle.
    ExampleMarriage {
        #[arg(long, value_enum, default_value = "single")]
        variant: Variant,
        #[arg(long, default_value = "marriage-curves")]
        out_dir: PathBuf,
        /// Override the initial law, comma separated.
        #[arg(long, value_delimiter = ',')]
        pi: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Validate { model } => commands::validate(&model),
        Command::Eval(args) => commands::eval(&args, &argv),
        Command::Simulate(args) => commands::simulate(&args, &argv),
        Command::Estimate { input, out } => commands::estimate(&input, out.as_deref()),
        Command::ExampleMarriage { variant, out_dir, pi } => commands::example_marriage(variant, &out_dir, pi),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
