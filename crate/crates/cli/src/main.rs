mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("SPIKEFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("SPIKEFLOW_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("SPIKEFLOW_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
        force: cli.force,
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, &a),
        Command::Generate(a) => commands::generate(&ctx, &a),
        Command::Prune(a) => commands::prune(&ctx, &a),
        Command::Split(a) => commands::split(&ctx, &a),
        Command::Train(a) => commands::train(&ctx, &a),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a),
        Command::Plot(a) => commands::plot(&ctx, &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
