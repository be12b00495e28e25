//! `latticeprop`: generate scenes, train fields, group and box instances,
//! benchmark and render.

mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "latticeprop", version, about = "Lattice correlation propagation toolkit")]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scene, optionally with its ideal field.
    Generate(commands::GenerateArgs),
    /// Group foreground nodes and fit boxes.
    Infer(commands::InferArgs),
    /// Fit field, foreground and geometry logits to a scene.
    Train(commands::TrainArgs),
    /// Time full propagation against greedy path selection.
    Bench(commands::BenchArgs),
    /// Confidence heatmaps and vector-field rasters.
    Render(commands::RenderArgs),
    /// Score detections against a scene.
    Eval(commands::EvalArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Args(format!("cannot build thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    pool.install(|| match cli.command {
        Command::Generate(a) => commands::generate(a, threads),
        Command::Infer(a) => commands::infer(a, threads),
        Command::Train(a) => commands::train(a, threads),
        Command::Bench(a) => commands::bench(a, threads),
        Command::Render(a) => commands::render(a, threads),
        Command::Eval(a) => commands::eval(a, threads),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATTICEPROP_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
