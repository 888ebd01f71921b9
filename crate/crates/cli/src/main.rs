use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pclm_cli::run::{run_aggregate, run_benchmark, ESTIMATES_FILE, GRID_FILE, REPORT_FILE};
use pclm_cli::{exit, run_fit, run_grid_search, simulate, CliError, FitOutcome, Options};

#[derive(Parser)]
#[command(name = "pclm", version, about = "Ungroup multidimensional counts with a penalized composite link model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit with fixed smoothing parameters and write estimates plus a run report
    Fit(Options),
    /// Draw synthetic grouped counts with a known latent surface
    Simulate(Options),
    /// Sum fine-resolution counts into the groups of a grouping file
    Aggregate(Options),
    /// Time the array and explicit-matrix engines on the same problem
    Benchmark(Options),
    /// Fit every smoothing parameter tuple of a grid and keep the lowest AIC
    GridSearch(Options),
}

fn summarize(outcome: &FitOutcome) -> i32 {
    let r = &outcome.report;
    println!(
        "lambdas {:?}: ED {:.3}, {} iterations, deviance {:.3}, fit {:.3}s, variance {:.3}s",
        r.lambdas, r.effective_dimension, r.iterations, r.deviance, r.timing.fit_seconds, r.timing.variance_seconds
    );
    for w in &r.warnings {
        eprintln!("warning: {w}; estimates were written anyway");
    }
    if r.converged {
        exit::SUCCESS
    } else {
        exit::NOT_CONVERGED
    }
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Fit(opts) => {
            let config = opts.resolve()?;
            let outcome = run_fit(&config)?;
            println!("wrote {} and {} in {}", ESTIMATES_FILE, REPORT_FILE, config.out_dir.display());
            Ok(summarize(&outcome))
        }
        Command::GridSearch(opts) => {
            let config = opts.resolve()?;
            let (grid, outcome) = run_grid_search(&config)?;
            for p in &grid.points {
                match p.aic {
                    Some(aic) => println!("{:?}: AIC {aic:.3} ({})", p.lambdas, p.status),
                    None => println!("{:?}: {}", p.lambdas, p.status),
                }
            }
            println!("wrote {GRID_FILE}, {ESTIMATES_FILE} and {REPORT_FILE} in {}", config.out_dir.display());
            Ok(summarize(&outcome))
        }
        Command::Simulate(opts) => {
            let config = opts.resolve()?;
            let layout = config.simulation_layout()?;
            let sim = simulate(&layout, config.seed)?;
            sim.write(&config.out_dir)?;
            println!(
                "simulated {} fine cells in {} groups (total {}) into {}",
                sim.fine_counts.len(),
                sim.counts.len(),
                sim.counts.sum(),
                config.out_dir.display()
            );
            Ok(exit::SUCCESS)
        }
        Command::Aggregate(opts) => {
            let config = opts.resolve()?;
            let grouped = run_aggregate(&config)?;
            println!("aggregated into {} groups (total {})", grouped.len(), grouped.sum());
            Ok(exit::SUCCESS)
        }
        Command::Benchmark(opts) => {
            let config = opts.resolve()?;
            let report = run_benchmark(&config)?;
            for e in &report.engines {
                let total = e.fit_seconds.zip(e.variance_seconds).map(|(f, v)| f + v);
                match total {
                    Some(t) => {
                        println!("{}: {t:.3}s, peak {} elements ({})", e.engine, e.peak_elements.unwrap_or(0), e.status)
                    }
                    None => println!("{}: {}", e.engine, e.status),
                }
            }
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
