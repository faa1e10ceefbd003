use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tsdyn_cli::{Command, Overrides};

/// Solve and analyse second-order Dirichlet problems on time scales.
#[derive(Parser)]
#[command(name = "tsdyn", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration file.
    config: PathBuf,
    /// Write results here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the sampling checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver strategy, e.g. picard or newton_oracle.
    #[arg(long)]
    strategy: Option<String>,
    /// Refinement family sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    family: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TSDYN_LOG")).init();
    let args = Args::parse();
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        strategy: args.strategy,
        family: args.family,
    };
    match tsdyn_cli::run(args.command, &args.config, &overrides) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("tsdyn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
