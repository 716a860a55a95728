//! `mvregime` — drive the solver toolkit from a JSON run configuration:
//! stability checks, backward solves, frontier sweeps, and closed-loop
//! Monte Carlo, each leaving reproducible artifacts on disk.

mod artifacts;
mod check;
mod config;
mod frontier;
mod simulate;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{KappaRange, RunConfig};

#[derive(Parser)]
#[command(
    name = "mvregime",
    version,
    about = "Mean-variance portfolio control under a hidden regime-switching market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the grid-driven subcommands; every flag overrides the
/// matching field of the `--config` file.
#[derive(Args)]
struct CommonArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Wealth and probability step.
    #[arg(long)]
    grid_h1: Option<f64>,
    /// Time step.
    #[arg(long)]
    grid_h2: Option<f64>,
    /// Lower edge of the wealth box.
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    /// Upper edge of the wealth box.
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Base seed; path i draws from stream i.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan every (layer, node, control) for stability and probe the
    /// one-step moments; exits nonzero if the grid is unusable.
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Backward solve at a fixed multiplier and mean target; writes
    /// value_policy.csv and solve_summary.json.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Lagrange multiplier of the mean constraint.
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        /// Target terminal mean.
        #[arg(long, allow_negative_numbers = true)]
        kappa: Option<f64>,
        /// Proceed even if the stability scan fails.
        #[arg(long)]
        force: bool,
    },
    /// Sweep the mean target, searching the multiplier and validating each
    /// point by Monte Carlo; writes frontier.csv and frontier_summary.json.
    Frontier {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Multiplier search bracket.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        lambda_bracket: Option<Vec<f64>>,
        /// Mean targets START STOP STEP (STOP inclusive).
        #[arg(long, num_args = 3, value_names = ["START", "STOP", "STEP"], allow_negative_numbers = true)]
        kappa_range: Option<Vec<f64>>,
        /// Proceed even if the stability scan fails.
        #[arg(long)]
        force: bool,
    },
    /// Monte Carlo under a previously solved policy; writes mc_report.json.
    Simulate {
        /// Run configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model JSON file.
        #[arg(long)]
        model: Option<PathBuf>,
        /// solve_summary.json of the policy to play.
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        mc: McArgs,
        /// Also write the first N trajectories as sample_paths.csv.
        #[arg(long, value_name = "N")]
        sample_paths: Option<usize>,
        /// Output directory (default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_common(config: &mut RunConfig, args: &CommonArgs) {
    if let Some(model) = &args.model {
        config.model = Some(model.clone());
    }
    if let Some(h1) = args.grid_h1 {
        config.grid.h1 = Some(h1);
    }
    if let Some(h2) = args.grid_h2 {
        config.grid.h2 = Some(h2);
    }
    if let Some(lo) = args.x_min {
        config.grid.x_min = Some(lo);
    }
    if let Some(hi) = args.x_max {
        config.grid.x_max = Some(hi);
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
}

fn apply_mc(config: &mut RunConfig, args: &McArgs) {
    if let Some(paths) = args.paths {
        config.simulation.n_paths = Some(paths);
    }
    if let Some(seed) = args.seed {
        config.simulation.seed = Some(seed);
    }
}

/// Honor `MVREGIME_THREADS` before any parallel region spins up.
fn init_thread_pool() -> Result<()> {
    let Ok(value) = std::env::var("MVREGIME_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("MVREGIME_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("cannot size the worker pool")?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Check { common } => {
            let mut config = load_config(&common.config)?;
            apply_common(&mut config, &common);
            check::run(&config)
        }
        Command::Solve {
            common,
            lambda,
            kappa,
            force,
        } => {
            let mut config = load_config(&common.config)?;
            apply_common(&mut config, &common);
            if let Some(lambda) = lambda {
                config.solver.lambda = Some(lambda);
            }
            if let Some(kappa) = kappa {
                config.solver.kappa = Some(kappa);
            }
            solve::run(&config, force).map(|()| 0)
        }
        Command::Frontier {
            common,
            mc,
            lambda_bracket,
            kappa_range,
            force,
        } => {
            let mut config = load_config(&common.config)?;
            apply_common(&mut config, &common);
            apply_mc(&mut config, &mc);
            if let Some(bracket) = lambda_bracket {
                config.solver.lambda_bracket = Some([bracket[0], bracket[1]]);
            }
            if let Some(range) = kappa_range {
                config.solver.kappa_range = Some(KappaRange {
                    start: range[0],
                    stop: range[1],
                    step: range[2],
                });
            }
            frontier::run(&config, force).map(|()| 0)
        }
        Command::Simulate {
            config: config_path,
            model,
            policy,
            mc,
            sample_paths,
            out,
        } => {
            let mut config = load_config(&config_path)?;
            if let Some(model) = model {
                config.model = Some(model);
            }
            if let Some(out) = out {
                config.out = Some(out);
            }
            apply_mc(&mut config, &mc);
            simulate::run(&config, &policy, sample_paths).map(|()| 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = init_thread_pool() {
        eprintln!("error: {err:#}");
        return ExitCode::FAILURE;
    }
    match dispatch(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
