//! `bosonkit` command-line interface.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure (non-convergence under
//! `--strict`), 4 size cap. Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`.

mod cmd;
mod error;
mod io;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "bosonkit",
    version,
    about = "Partially distinguishable bosons: distributions, estimation, design and fitting"
)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Allow tables above the default size cap.
    #[arg(long, global = true)]
    force: bool,
    /// Exit with code 3 when a solver does not converge.
    #[arg(long, global = true)]
    strict: bool,
    /// Output file (default: standard output).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exhaustive outcome probabilities as CSV.
    Simulate(cmd::simulate::DistArgs),
    /// Multinomial samples as a counts dataset.
    Sample(cmd::simulate::SampleArgs),
    /// Indistinguishability from HOM counts.
    HomEstimate(cmd::hom::HomArgs),
    /// Thermal partition weights over an x grid as CSV.
    PartitionWeights(cmd::weights::WeightsArgs),
    /// A-optimal experiment design.
    Design(cmd::design::DesignArgs),
    /// Maximum-likelihood fit of a submatrix to two-particle data.
    Fit(cmd::fit::FitArgs),
    /// Averaged generalized bunching.
    Bunching(cmd::bunching::BunchingArgs),
    /// Dephasing fidelity lower bound.
    ErrorBound(cmd::bound::BoundArgs),
}

pub struct Ctx {
    pub force: bool,
    pub strict: bool,
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let ctx = Ctx {
        force: cli.force,
        strict: cli.strict,
        out: cli.out,
    };
    match &cli.command {
        Command::Simulate(a) => cmd::simulate::simulate(&ctx, a),
        Command::Sample(a) => cmd::simulate::sample(&ctx, a),
        Command::HomEstimate(a) => cmd::hom::run(&ctx, a),
        Command::PartitionWeights(a) => cmd::weights::run(&ctx, a),
        Command::Design(a) => cmd::design::run(&ctx, a),
        Command::Fit(a) => cmd::fit::run(&ctx, a),
        Command::Bunching(a) => cmd::bunching::run(&ctx, a),
        Command::ErrorBound(a) => cmd::bound::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bosonkit: {e}");
            e.exit_code()
        }
    }
}
