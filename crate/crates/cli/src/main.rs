use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod sweep;

/// Capacity expansion and dispatch runs with shadow-price reporting.
#[derive(Parser)]
#[command(name = "gridprice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Long-term capacity expansion.
    SolveLt {
        scenario: PathBuf,
        /// Run directory; defaults to the scenario's output_dir or runs/<name>/lt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Short-term dispatch with fixed capacities and perfect foresight.
    SolveSt {
        scenario: PathBuf,
        /// capacities.json, or a run directory containing one.
        #[arg(long)]
        capacities: Option<PathBuf>,
        /// Relative capacity change, e.g. -0.05.
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rolling-horizon dispatch with constant bids for long-duration storage.
    DispatchMyopic {
        scenario: PathBuf,
        #[arg(long)]
        capacities: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// A value for every separate-converter storage, a JSON map
        /// `{storage: value}`, or a run directory whose mean MSV is used.
        #[arg(long)]
        msv_bar: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the metrics of a run directory and compare with the stored ones.
    Metrics { run_dir: PathBuf },
    /// Re-check optimality conditions of a stored run.
    ValidateKkt {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Run a grid of demand models and capacity perturbations.
    Sweep {
        matrix: PathBuf,
        /// Worker threads; defaults to the matrix file or the CPU count.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Exit status for an error: 3 for solver failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use gridprice::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Solve { .. } | Error::InfeasibleWindow { .. } | Error::NotOptimal(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveLt { scenario, out } => commands::solve_lt(&scenario, out),
        Command::SolveSt { scenario, capacities, perturb, out } => {
            commands::solve_st(&scenario, capacities, perturb, out)
        }
        Command::DispatchMyopic { scenario, capacities, horizon, stride, msv_bar, perturb, out } => {
            commands::dispatch_myopic(&scenario, commands::MyopicArgs { capacities, horizon, stride, msv_bar, perturb, out })
        }
        Command::Metrics { run_dir } => commands::metrics(&run_dir),
        Command::ValidateKkt { run_dir, tol } => commands::validate_kkt(&run_dir, tol),
        Command::Sweep { matrix, jobs } => sweep::run(&matrix, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
