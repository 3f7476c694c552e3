mod args;
mod commands;
mod config;
mod convert;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use output::RunContext;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn run(cli: &Cli, ctx: &RunContext) -> Result<()> {
    match &cli.command {
        Command::Convert(a) => convert::run(a, ctx),
        Command::Stats(a) => commands::stats(a),
        Command::Synth(a) => commands::synth(a, ctx),
        Command::Train(a) => commands::train(a, ctx),
        Command::Infer(a) => commands::infer(a, ctx),
        Command::Baseline(a) => commands::baseline(a, ctx),
        Command::Eval(a) => commands::eval(a, ctx),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let ctx = RunContext {
        argv,
        seed: cli.seed,
        threads: rayon::current_num_threads(),
    };
    match run(&cli, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e:#}", cli.command.name());
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
