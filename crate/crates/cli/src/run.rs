//! Fitting, grid search, aggregation and benchmarking over files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pclm::naive::alpha_array;
use pclm::uncertainty::confidence_intervals;
use pclm::{
    benchmark, build_bspline_basis, build_composition, effective_dimension, fit, fit_naive, naive_covariance, quantify,
    BasisSpec, BenchmarkReport, Engine, NdArray, PclmError, PclmProblem, PenaltySpec, StopCriterion,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{read_grid, write_grid, Scale};
use crate::error::{CliError, Result};
use crate::layout::Layout;
use crate::simulate::{aggregate_to_groups, COUNTS_FILE};

pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const REPORT_FILE: &str = "report.json";
pub const GRID_FILE: &str = "grid.json";
pub const BENCHMARK_FILE: &str = "benchmark.json";

/// Tolerance under which two AIC values count as tied.
const AIC_TIE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Ingested {
    pub layout: Layout,
    pub problem: PclmProblem,
}

/// Assemble a problem on `layout`, with the basis domain spanning each
/// dimension's fine coordinates.
pub fn build_problem(
    layout: &Layout,
    counts: NdArray,
    exposures: Option<NdArray>,
    config: &RunConfig,
    lambdas: Vec<f64>,
) -> Result<PclmProblem> {
    let sizes = config.basis_for(layout)?;
    let mut comps = Vec::with_capacity(layout.ndim());
    let mut bases = Vec::with_capacity(layout.ndim());
    for (dim, &c) in layout.dims.iter().zip(&sizes) {
        if dim.n_fine() < 2 {
            return Err(CliError::config(format!("dimension {} needs at least two fine cells", dim.name)));
        }
        comps.push(build_composition(&dim.grouping(), dim.n_fine())?);
        let spec = BasisSpec::with_size(dim.first as f64, dim.last as f64, c, config.degree)
            .map_err(|e| CliError::config(format!("dimension {}: {e}", dim.name)))?;
        let x: Vec<f64> = dim.coordinates().map(|v| v as f64).collect();
        bases.push(build_bspline_basis(&spec, &x)?);
    }
    let penalty = PenaltySpec::new(lambdas, config.porder)?;
    Ok(PclmProblem::new(counts, exposures, comps, bases, penalty)?)
}

pub fn ingest(config: &RunConfig) -> Result<Ingested> {
    let layout = Layout::read(&RunConfig::require(&config.grouping, "grouping")?)?;
    let counts = read_grid(&RunConfig::require(&config.counts, "counts")?, &layout, Scale::Grouped, "count")?;
    let exposures = config.exposures.as_deref().map(|p| read_grid(p, &layout, Scale::Fine, "exposure")).transpose()?;
    let lambdas = config.lambdas_for(&layout)?;
    let problem = build_problem(&layout, counts, exposures, config, lambdas)?;
    Ok(Ingested { layout, problem })
}

/// Per-cell estimates on the fine grid; rates and bands are on the rate scale.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub eta_hat: NdArray,
    pub se_eta: NdArray,
    pub gamma_hat: NdArray,
    pub rate: NdArray,
    pub ci_lower: NdArray,
    pub ci_upper: NdArray,
}

impl Estimates {
    pub fn write(&self, path: &Path, layout: &Layout) -> Result<()> {
        let eta_lower = self.ci_lower.map(f64::ln);
        let eta_upper = self.ci_upper.map(f64::ln);
        write_grid(
            path,
            layout,
            Scale::Fine,
            &[
                ("eta_hat", &self.eta_hat),
                ("se_eta", &self.se_eta),
                ("gamma_hat", &self.gamma_hat),
                ("rate", &self.rate),
                ("ci_lower", &self.ci_lower),
                ("ci_upper", &self.ci_upper),
                ("eta_lower", &eta_lower),
                ("eta_upper", &eta_upper),
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub name: String,
    pub first: i64,
    pub last: i64,
    pub fine: usize,
    pub groups: usize,
    pub basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub fit_seconds: f64,
    pub variance_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub engine: Engine,
    pub dimensions: Vec<DimensionReport>,
    pub degree: usize,
    pub penalty_order: usize,
    pub lambdas: Vec<f64>,
    pub level: f64,
    pub effective_dimension: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: Option<StopCriterion>,
    pub penalized_loglik: f64,
    pub deviance: f64,
    pub aic: f64,
    pub observed_total: f64,
    pub fitted_total: f64,
    pub estimate_rows: usize,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub report: RunReport,
    pub estimates: Estimates,
}

/// Grouped-scale Poisson deviance.
pub fn deviance(y: &NdArray, mu: &[f64]) -> f64 {
    2.0 * y.data().iter().zip(mu).map(|(&y, &m)| if y > 0.0 { y * (y / m).ln() - (y - m) } else { m }).sum::<f64>()
}

struct EngineFit {
    eta_hat: NdArray,
    gamma_hat: NdArray,
    mu_hat: Vec<f64>,
    se_eta: NdArray,
    effective_dimension: f64,
    iterations: usize,
    converged: bool,
    stop: Option<StopCriterion>,
    pen_loglik: f64,
    fit_seconds: f64,
    variance_seconds: f64,
}

fn fit_glam(problem: &PclmProblem, config: &RunConfig) -> Result<EngineFit> {
    let t0 = Instant::now();
    let result = fit(problem, &config.solver)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let variance = quantify(&result, problem, config.level)?;
    Ok(EngineFit {
        variance_seconds: t1.elapsed().as_secs_f64(),
        fit_seconds,
        se_eta: variance.se_eta,
        effective_dimension: variance.effective_dimension,
        mu_hat: result.mu_hat.into_data(),
        eta_hat: result.eta_hat,
        gamma_hat: result.gamma_hat,
        iterations: result.iterations,
        converged: result.converged,
        stop: result.stop,
        pen_loglik: result.pen_loglik,
    })
}

fn fit_explicit(problem: &PclmProblem, config: &RunConfig) -> Result<EngineFit> {
    let t0 = Instant::now();
    let result = fit_naive(problem, &config.solver, config.budget)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let v = naive_covariance(&result, problem.penalty())?;
    let bv = result.b.matmul(&v)?;
    let rows = result.b.rows();
    let mut var = vec![0.0; rows];
    for j in 0..result.b.cols() {
        for ((s, x), y) in var.iter_mut().zip(bv.column(j)).zip(result.b.column(j)) {
            *s += x * y;
        }
    }
    let se_eta = NdArray::new(problem.fine_dims(), var.into_iter().map(|s| s.max(0.0).sqrt()).collect())?;
    // trace(V H0) with H0 = V⁻¹ − P
    let vp: f64 = v.data().iter().zip(problem.penalty().data()).map(|(a, b)| a * b).sum();
    let effective_dimension = problem.n_coef() as f64 - vp;
    let variance_seconds = t1.elapsed().as_secs_f64();
    let alpha = alpha_array(&result, problem)?;
    let eta_hat = NdArray::new(problem.fine_dims(), result.b.matvec(alpha.data())?)?;
    Ok(EngineFit {
        eta_hat,
        gamma_hat: NdArray::new(problem.fine_dims(), result.gamma_hat)?,
        mu_hat: result.mu_hat,
        se_eta,
        effective_dimension,
        iterations: result.iterations,
        converged: result.converged,
        stop: result.stop,
        pen_loglik: result.pen_loglik,
        fit_seconds,
        variance_seconds,
    })
}

/// Fit, quantify uncertainty and summarise, without touching the filesystem.
pub fn fit_problem(problem: &PclmProblem, layout: &Layout, config: &RunConfig) -> Result<FitOutcome> {
    let fitted = match config.engine {
        Engine::Glam => fit_glam(problem, config)?,
        Engine::Naive => fit_explicit(problem, config)?,
    };
    let intervals = confidence_intervals(&fitted.eta_hat, &fitted.se_eta, config.level)?;
    let estimates = Estimates {
        rate: fitted.eta_hat.map(f64::exp),
        eta_hat: fitted.eta_hat,
        se_eta: fitted.se_eta,
        gamma_hat: fitted.gamma_hat,
        ci_lower: intervals.lower,
        ci_upper: intervals.upper,
    };
    let dev = deviance(problem.y(), &fitted.mu_hat);
    let mut warnings = Vec::new();
    if !fitted.converged {
        warnings.push(format!("not converged after {} iterations", fitted.iterations));
    }
    let sizes = config.basis_for(layout)?;
    let report = RunReport {
        engine: config.engine,
        dimensions: layout
            .dims
            .iter()
            .zip(sizes)
            .map(|(d, basis)| DimensionReport {
                name: d.name.clone(),
                first: d.first,
                last: d.last,
                fine: d.n_fine(),
                groups: d.n_groups(),
                basis,
            })
            .collect(),
        degree: config.degree,
        penalty_order: config.porder,
        lambdas: problem.penalty_spec().lambdas.clone(),
        level: config.level,
        effective_dimension: fitted.effective_dimension,
        iterations: fitted.iterations,
        converged: fitted.converged,
        stop: fitted.stop,
        penalized_loglik: fitted.pen_loglik,
        deviance: dev,
        aic: dev + 2.0 * fitted.effective_dimension,
        observed_total: problem.y().sum(),
        fitted_total: estimates.gamma_hat.sum(),
        estimate_rows: estimates.eta_hat.len(),
        timing: Timing { fit_seconds: fitted.fit_seconds, variance_seconds: fitted.variance_seconds },
        warnings,
    };
    Ok(FitOutcome { report, estimates })
}

fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| CliError::io(&config.out_dir, e))?;
    Ok(config.out_dir.clone())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

impl FitOutcome {
    pub fn write(&self, out_dir: &Path, layout: &Layout) -> Result<()> {
        self.estimates.write(&out_dir.join(ESTIMATES_FILE), layout)?;
        write_json(&out_dir.join(REPORT_FILE), &self.report)
    }
}

/// Ingest, fit with the configured λ and write `estimates.csv` and `report.json`.
/// A fit that stops at the iteration cap is still written.
pub fn run_fit(config: &RunConfig) -> Result<FitOutcome> {
    let ingested = ingest(config)?;
    let outcome = fit_problem(&ingested.problem, &ingested.layout, config)?;
    outcome.write(&prepare_out_dir(config)?, &ingested.layout)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub lambdas: Vec<f64>,
    pub status: String,
    pub iterations: Option<usize>,
    pub deviance: Option<f64>,
    pub effective_dimension: Option<f64>,
    pub aic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub engine: Engine,
    pub criterion: &'static str,
    pub points: Vec<GridPoint>,
    pub best: Option<usize>,
    pub best_lambdas: Option<Vec<f64>>,
}

fn evaluate(problem: &PclmProblem, config: &RunConfig) -> Result<(usize, bool, f64, f64)> {
    match config.engine {
        Engine::Glam => {
            let result = fit(problem, &config.solver)?;
            let ed = effective_dimension(&result, problem)?;
            Ok((result.iterations, result.converged, deviance(problem.y(), result.mu_hat.data()), ed))
        }
        Engine::Naive => {
            let result = fit_naive(problem, &config.solver, config.budget)?;
            let v = naive_covariance(&result, problem.penalty())?;
            let vp: f64 = v.data().iter().zip(problem.penalty().data()).map(|(a, b)| a * b).sum();
            let ed = problem.n_coef() as f64 - vp;
            Ok((result.iterations, result.converged, deviance(problem.y(), &result.mu_hat), ed))
        }
    }
}

/// Index of the smallest AIC among converged points; near-ties go to the
/// larger λ product.
pub fn select_best(points: &[GridPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        let Some(aic) = p.aic.filter(|_| p.status == "ok") else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let incumbent = points[b].aic.unwrap();
                let tie = (aic - incumbent).abs() <= AIC_TIE * incumbent.abs().max(1.0);
                let product = |p: &GridPoint| p.lambdas.iter().product::<f64>();
                if (!tie && aic < incumbent) || (tie && product(p) > product(&points[b])) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Fit every λ tuple concurrently and rank by AIC = deviance + 2·ED.
pub fn grid_search(problem: &PclmProblem, config: &RunConfig, tuples: &[Vec<f64>]) -> Result<GridReport> {
    let results: Vec<(GridPoint, Option<PclmError>)> = tuples
        .par_iter()
        .map(|lambdas| {
            let outcome = problem.with_lambdas(lambdas.clone()).and_then(|p| {
                evaluate(&p, config).map_err(|e| match e {
                    CliError::Model(m) => m,
                    other => PclmError::Validation(other.to_string()),
                })
            });
            match outcome {
                Ok((iterations, converged, dev, ed)) => (
                    GridPoint {
                        lambdas: lambdas.clone(),
                        status: if converged { "ok".into() } else { "not converged".into() },
                        iterations: Some(iterations),
                        deviance: Some(dev),
                        effective_dimension: Some(ed),
                        aic: Some(dev + 2.0 * ed),
                    },
                    None,
                ),
                Err(e) => (
                    GridPoint {
                        lambdas: lambdas.clone(),
                        status: format!("failed: {e}"),
                        iterations: None,
                        deviance: None,
                        effective_dimension: None,
                        aic: None,
                    },
                    Some(e),
                ),
            }
        })
        .collect();
    let mut points = Vec::with_capacity(results.len());
    let mut resource = None;
    for (point, err) in results {
        if let Some(e @ PclmError::Resource { .. }) = err {
            resource.get_or_insert(e);
        }
        points.push(point);
    }
    let best = select_best(&points);
    if best.is_none() {
        return Err(match resource {
            Some(e) => e.into(),
            None => CliError::NoConvergedPoint,
        });
    }
    Ok(GridReport {
        engine: config.engine,
        criterion: "aic",
        best_lambdas: best.map(|b| points[b].lambdas.clone()),
        best,
        points,
    })
}

/// Grid search over the configured λ grid, then a full fit at the best tuple.
/// Writes `grid.json` next to the usual fit outputs.
pub fn run_grid_search(config: &RunConfig) -> Result<(GridReport, FitOutcome)> {
    let ingested = ingest(config)?;
    let tuples = config.grid_for(&ingested.layout)?;
    let report = grid_search(&ingested.problem, config, &tuples)?;
    let best = report.best_lambdas.clone().expect("grid_search returns a best point");
    let best_config = RunConfig { lambdas: Some(best.clone()), ..config.clone() };
    let outcome = fit_problem(&ingested.problem.with_lambdas(best)?, &ingested.layout, &best_config)?;
    let out_dir = prepare_out_dir(config)?;
    write_json(&out_dir.join(GRID_FILE), &report)?;
    outcome.write(&out_dir, &ingested.layout)?;
    Ok((report, outcome))
}

/// Sum a fine-resolution count file into the groups of the grouping file.
pub fn run_aggregate(config: &RunConfig) -> Result<NdArray> {
    let layout = Layout::read(&RunConfig::require(&config.grouping, "grouping")?)?;
    let fine = read_grid(&RunConfig::require(&config.counts, "counts")?, &layout, Scale::Fine, "count")?;
    let grouped = aggregate_to_groups(&layout, &fine)?;
    let out_dir = prepare_out_dir(config)?;
    write_grid(&out_dir.join(COUNTS_FILE), &layout, Scale::Grouped, &[("count", &grouped)])?;
    Ok(grouped)
}

/// Time both engines on the ingested problem and write `benchmark.json`.
pub fn run_benchmark(config: &RunConfig) -> Result<BenchmarkReport> {
    let ingested = ingest(config)?;
    let report = benchmark(&ingested.problem, &config.solver, &[Engine::Glam, Engine::Naive], config.budget);
    write_json(&prepare_out_dir(config)?.join(BENCHMARK_FILE), &report)?;
    Ok(report)
}
