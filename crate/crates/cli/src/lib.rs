//! File-based front end for penalized composite link model fits: ingestion
//! of grouped counts, synthetic data, fitting with optional λ grid search,
//! uncertainty output and engine benchmarks.

pub mod config;
pub mod data;
pub mod error;
pub mod layout;
pub mod run;
pub mod simulate;

pub use config::{Options, RunConfig, Settings};
pub use error::{exit, CliError, Result};
pub use layout::{Dimension, Layout};
pub use run::{fit_problem, grid_search, ingest, run_fit, run_grid_search, FitOutcome, GridReport, RunReport};
pub use simulate::{simulate, Simulation};
