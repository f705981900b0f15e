use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use double_disorder::cli;
use double_disorder::solver::{SolverConfig, DEFAULT_GRID_RESOLUTION, DEFAULT_TOL};

#[derive(Parser)]
#[command(
    name = "ddetect",
    version,
    about = "Detect two ordered change points in a Markov sequence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample trajectories with their true change points.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Steps per trajectory [default: 10 x prior mean of θ2]
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the double stopping problem and write the policy.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// Simplex grid subdivisions (multi-regime models only).
        #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
        grid: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Also solve the problem truncated at this horizon.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the detector over a trajectory file.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        /// Steps to process per trajectory [default: full length]
        #[arg(long)]
        horizon: Option<usize>,
        /// Also write per-step decision traces here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the detection probability.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// [default: 10 x prior mean of θ2]
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the filter against exhaustive enumeration up to a depth.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior trace of one trajectory.
    Filter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        /// Trajectory to trace [default: first row]
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force optimal policy and posteriors for a short horizon.
    Oracle {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| {
            double_disorder::Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
            .into()
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Returns whether the command's own checks passed.
fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate {
            model,
            horizon,
            count,
            seed,
            out,
        } => emit(out.as_deref(), &cli::cmd_simulate(&model, horizon, count, seed)?)?,
        Command::Solve {
            model,
            grid,
            tol,
            horizon,
            out,
        } => {
            let cfg = SolverConfig {
                grid_resolution: grid,
                tol,
                max_sweeps: None,
                horizon,
            };
            emit(out.as_deref(), &cli::cmd_solve(&model, &cfg)?)?
        }
        Command::Detect {
            model,
            policy,
            trajectories,
            horizon,
            trace,
            out,
        } => {
            let res = cli::cmd_detect(&model, &policy, &trajectories, horizon, trace.is_some())?;
            if let (Some(path), Some(text)) = (trace.as_deref(), res.traces.as_deref()) {
                emit(Some(path), text)?;
            }
            emit(out.as_deref(), &res.results)?
        }
        Command::Evaluate {
            model,
            policy,
            runs,
            seed,
            horizon,
            out,
        } => emit(
            out.as_deref(),
            &cli::cmd_evaluate(&model, &policy, runs, seed, horizon)?,
        )?,
        Command::Verify { model, depth, out } => {
            let (text, passed) = cli::cmd_verify(&model, depth)?;
            emit(out.as_deref(), &text)?;
            return Ok(passed);
        }
        Command::Filter {
            model,
            trajectories,
            seed,
            out,
        } => emit(out.as_deref(), &cli::cmd_filter(&model, &trajectories, seed)?)?,
        Command::Oracle { model, horizon, out } => emit(out.as_deref(), &cli::cmd_oracle(&model, horizon)?)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<double_disorder::Error>()
                .map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
