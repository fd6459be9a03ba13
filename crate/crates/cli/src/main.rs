use std::path::PathBuf;

use bridgesolve::{run, Command};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bridgesolve", version, about = "Diffusion-bridge sampler experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check closed-form exponential integrals against quadrature.
    Integrals(Common),
    /// Measure convergence orders of the deterministic phases.
    Convergence(Common),
    /// Compare sample quality against a fine reference at fixed NFE budgets.
    Benchmark(Common),
    /// Draw one batch with the configured solver.
    Sample(Common),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Integrals(a) => (Command::Integrals, a),
        Cmd::Convergence(a) => (Command::Convergence, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
        Cmd::Sample(a) => (Command::Sample, a),
    };
    std::process::exit(run(command, &args.config, args.out, args.seed));
}
