//! `yamabe-lab`: classify a radial geometry by the sign of η₁, run the matching
//! barrier pipeline, verify the result and write CSV/JSON output.
//!
//! Exit codes: 0 success, 2 config or input error, 3 pipeline error,
//! 4 verification failure.

mod commands;
mod config;
mod csvio;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "yamabe-lab", version, about = "Radial boundary Yamabe lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// run configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// output directory (overrides [output] dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// skip auto-classification and run this case
    #[arg(long, value_enum)]
    pub force_case: Option<ForcedCase>,
    /// λ for the negative class (default η₁/2)
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// seed of the random-restart quotient minimizer
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcedCase {
    Zero,
    Negative,
    Positive,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// η₁, its sign class, λ(M) and the hemisphere bound
    Eigen(Common),
    /// case pipeline, monotone iteration and verification block
    Solve(Common),
    /// re-check a stored solution against the geometry of the config
    Verify {
        #[command(flatten)]
        common: Common,
        /// solution CSV (index,r,value)
        #[arg(long)]
        solution: PathBuf,
        /// prescribed boundary mean curvature
        #[arg(long)]
        zeta: Option<f64>,
    },
    /// dense-oracle equivalence suites on a tiny grid
    Oracle(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Eigen(c) => commands::eigen(&c),
        Command::Solve(c) => commands::solve(&c),
        Command::Verify { common, solution, zeta } => commands::verify(&common, &solution, zeta),
        Command::Oracle(c) => commands::oracle(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
