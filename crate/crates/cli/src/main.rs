//! `fnsf`: scene synthesis, flow solving, evaluation, benchmarks, grid-size
//! ablation and accumulation.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 numeric failure, 5 memory budget.

mod ablate;
mod args;
mod bench;
mod config;
mod error;
mod io;
mod manifest;
mod solve_cmds;
mod svg;
mod synth;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "fnsf", version, about = "Scene flow by runtime optimization", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene pair (or frame sequence) with ground truth.
    Synth(synth::SynthArgs),
    /// Estimate flow from a source to a target cloud.
    Flow(solve_cmds::FlowArgs),
    /// Score an estimated flow against ground truth as one CSV row.
    Eval(solve_cmds::EvalArgs),
    /// Time a method matrix over generated scenes.
    Bench(bench::BenchArgs),
    /// Sweep DT cell sizes on one scene.
    AblateGrid(ablate::AblateArgs),
    /// Integrate earlier frames into a reference frame.
    Accumulate(solve_cmds::AccumulateArgs),
}

fn run() -> Result<(), CliError> {
    let argv = config::expand(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { Exit::Usage as i32 } else { 0 });
        }
    };
    match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Flow(a) => solve_cmds::flow(&a),
        Command::Eval(a) => solve_cmds::eval(&a),
        Command::Bench(a) => bench::run(&a),
        Command::AblateGrid(a) => ablate::run(&a),
        Command::Accumulate(a) => solve_cmds::accumulate(&a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
