use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use goal_calib_cli::{parse_config, run_experiment, Command, RunOptions};

#[derive(Parser)]
#[command(name = "goal-calib", version, about = "Goal-oriented error estimates and Bayesian calibration of PDE model pairs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `mcmc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Exact error against Xi1, Xi2 and Q(e_hat) for every error source.
    Verify(Common),
    /// Estimator deficits along a model-mismatch homotopy.
    OrderStudy(Common),
    /// Metropolis chains with the estimated QoI error as data misfit.
    Calibrate(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Verify(a) => (Command::Verify, a),
        Sub::OrderStudy(a) => (Command::OrderStudy, a),
        Sub::Calibrate(a) => (Command::Calibrate, a),
    };
    let cfg = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let bytes = std::fs::read(&args.config).unwrap_or_default();
    let opts = RunOptions {
        seed: args.seed,
        out: args.out,
    };
    match run_experiment(command, &cfg, &bytes, &opts) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("artifacts written to {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
