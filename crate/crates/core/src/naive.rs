//! Reference estimation with explicit Kronecker matrices and the working
//! design matrix `B̆ = W⁻¹CΓB`.
//!
//! This path exists to check the array path and to benchmark against it.
//! Every matrix is materialized, so its memory grows with `N x M`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::array::{DenseMatrix, NdArray};
use crate::error::{PclmError, Result};
use crate::linalg::Cholesky;
use crate::problem::{PclmProblem, SolverConfig};
use crate::solver::{acceptable, initial_alpha, relative_change, stop_criterion, IterationRecord, StopCriterion};
use crate::track;

/// Default cap on the element count of any explicit matrix.
pub const DEFAULT_ELEMENT_BUDGET: u128 = 1 << 27;

/// `X_d ⊗ .. ⊗ X_1` from `mats = [X_1, .., X_d]`, refused if larger than `budget` elements.
pub fn build_full_kronecker(mats: &[&DenseMatrix], budget: u128) -> Result<DenseMatrix> {
    let Some((first, rest)) = mats.split_first() else {
        return Err(PclmError::dim("no factors for a Kronecker product"));
    };
    let requested = kron_elements(mats);
    if requested > budget {
        return Err(PclmError::Resource { requested, budget });
    }
    let mut acc = (*first).clone();
    for m in rest {
        acc = m.kron(&acc);
    }
    Ok(acc)
}

fn kron_elements(mats: &[&DenseMatrix]) -> u128 {
    let rows: u128 = mats.iter().map(|m| m.rows() as u128).product();
    let cols: u128 = mats.iter().map(|m| m.cols() as u128).product();
    rows * cols
}

#[derive(Debug, Clone)]
pub struct NaiveFit {
    pub alpha_hat: Vec<f64>,
    /// Full basis `B = B_d ⊗ .. ⊗ B_1`, `M x C`.
    pub b: DenseMatrix,
    /// Full composition matrix `C = C_d ⊗ .. ⊗ C_1`, `N x M`.
    pub c: DenseMatrix,
    pub gamma_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop: Option<StopCriterion>,
    pub pen_loglik: f64,
    pub trace: Vec<IterationRecord>,
}

struct NaivePoint {
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    mu: Vec<f64>,
    pen_loglik: f64,
}

fn naive_point(
    alpha: Vec<f64>,
    b: &DenseMatrix,
    c: &DenseMatrix,
    e: Option<&[f64]>,
    y: &[f64],
    p: &DenseMatrix,
    floor: f64,
) -> Result<NaivePoint> {
    let eta = b.matvec(&alpha)?;
    let gamma: Vec<f64> = match e {
        Some(e) => eta.iter().zip(e).map(|(h, e)| (e * h.exp()).max(floor)).collect(),
        None => eta.iter().map(|h| h.exp().max(floor)).collect(),
    };
    let mu = c.matvec(&gamma)?;
    let mut ll = 0.0;
    for (&yg, &mg) in y.iter().zip(&mu) {
        if yg > 0.0 {
            if !(mg > 0.0) {
                ll = f64::NEG_INFINITY;
                break;
            }
            ll += yg * mg.ln();
        }
    }
    let pa = p.matvec(&alpha)?;
    ll -= gamma.iter().sum::<f64>() + 0.5 * pa.iter().zip(&alpha).map(|(x, a)| x * a).sum::<f64>();
    Ok(NaivePoint { alpha, gamma, mu, pen_loglik: ll })
}

/// `CΓB`, the `N x C` matrix from which `B̆ = W⁻¹CΓB` follows by row scaling.
fn c_gamma_b(c: &DenseMatrix, gamma: &[f64], b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut gb = b.clone();
    let rows = gb.rows();
    for j in 0..gb.cols() {
        for (v, g) in gb.data_mut()[j * rows..(j + 1) * rows].iter_mut().zip(gamma) {
            *v *= g;
        }
    }
    c.matmul(&gb)
}

fn check_budget(problem: &PclmProblem, budget: u128) -> Result<()> {
    let m: u128 = problem.fine_dims().iter().map(|&v| v as u128).product();
    let n: u128 = problem.group_dims().iter().map(|&v| v as u128).product();
    let k = problem.n_coef() as u128;
    for requested in [m * k, n * m, n * k] {
        if requested > budget {
            return Err(PclmError::Resource { requested, budget });
        }
    }
    Ok(())
}

/// Scoring on the grouped scale with the working matrix `B̆`.
pub fn fit_naive(problem: &PclmProblem, config: &SolverConfig, budget: u128) -> Result<NaiveFit> {
    config.validate()?;
    check_budget(problem, budget)?;
    let floor = config.gamma_floor;
    let bases: Vec<&DenseMatrix> = problem.bases().iter().collect();
    let comps: Vec<&DenseMatrix> = problem.comps().iter().map(|c| c.matrix()).collect();
    let b = build_full_kronecker(&bases, budget)?;
    let c = build_full_kronecker(&comps, budget)?;
    let e = problem.exposures().map(|e| e.data());
    let y = problem.y().data();
    let p = problem.penalty();
    let ncoef = b.cols();

    let mut current = naive_point(initial_alpha(problem)?.into_data(), &b, &c, e, y, p, floor)?;
    let mut trace = Vec::new();
    let mut stop = None;

    for iter in 1..=config.max_iter {
        let cgb = c_gamma_b(&c, &current.gamma, &b)?;
        // B̆ = W⁻¹ CΓB
        let mut breve = cgb;
        let n = breve.rows();
        for j in 0..ncoef {
            for (v, m) in breve.data_mut()[j * n..(j + 1) * n].iter_mut().zip(&current.mu) {
                *v /= m;
            }
        }
        // z_g = B̆α + W⁻¹(y − μ)
        let fitted = breve.matvec(&current.alpha)?;
        let z: Vec<f64> = fitted.iter().zip(y.iter().zip(&current.mu)).map(|(f, (yg, m))| f + (yg - m) / m).collect();
        let mut wb = breve.clone();
        for j in 0..ncoef {
            for (v, m) in wb.data_mut()[j * n..(j + 1) * n].iter_mut().zip(&current.mu) {
                *v *= m;
            }
        }
        let lhs = breve.t().matmul(wb.view())?.add(p)?;
        let rhs = wb.t().to_owned().matvec(&z)?;
        let proposal = Cholesky::factor(&lhs).and_then(|ch| ch.solve(&rhs)).map_err(|e| e.at_iteration(iter))?;
        let delta: Vec<f64> = proposal.iter().zip(&current.alpha).map(|(p, a)| p - a).collect();

        let mut step = 1.0;
        let mut halvings = 0;
        let accepted = loop {
            let trial_alpha: Vec<f64> = current.alpha.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let trial = naive_point(trial_alpha, &b, &c, e, y, p, floor)?;
            if acceptable(trial.pen_loglik, current.pen_loglik, config.tol_loglik) {
                break Some(trial);
            }
            if halvings == config.max_step_halvings {
                break None;
            }
            step *= 0.5;
            halvings += 1;
        };
        let Some(next) = accepted else {
            break;
        };
        let max_abs_delta = delta.iter().fold(0.0f64, |m, d| m.max((step * d).abs()));
        let change = relative_change(next.pen_loglik, current.pen_loglik);
        trace.push(IterationRecord {
            iteration: iter,
            pen_loglik: next.pen_loglik,
            max_abs_delta,
            step_halvings: halvings,
            redistribution_error: 0.0,
        });
        current = next;
        stop = stop_criterion(max_abs_delta, change, config);
        if stop.is_some() {
            break;
        }
    }

    Ok(NaiveFit {
        alpha_hat: current.alpha,
        b,
        c,
        gamma_hat: current.gamma,
        mu_hat: current.mu,
        iterations: trace.len(),
        converged: stop.is_some(),
        stop,
        pen_loglik: current.pen_loglik,
        trace,
    })
}

/// `(B̆'WB̆ + P)⁻¹` at the fitted values.
pub fn naive_covariance(fit: &NaiveFit, penalty: &DenseMatrix) -> Result<DenseMatrix> {
    let cgb = c_gamma_b(&fit.c, &fit.gamma_hat, &fit.b)?;
    let n = cgb.rows();
    let mut scaled = cgb;
    for j in 0..scaled.cols() {
        for (v, m) in scaled.data_mut()[j * n..(j + 1) * n].iter_mut().zip(&fit.mu_hat) {
            *v *= if *m > 0.0 { m.sqrt().recip() } else { 0.0 };
        }
    }
    let info = scaled.t().matmul(scaled.view())?.add(penalty)?;
    Ok(Cholesky::factor(&info)?.inverse())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Glam,
    Naive,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Glam => "glam",
            Engine::Naive => "naive",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = PclmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glam" => Ok(Engine::Glam),
            "naive" => Ok(Engine::Naive),
            other => Err(PclmError::invalid(format!("unknown engine {other:?}, expected glam or naive"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineReport {
    pub engine: Engine,
    pub fit_seconds: Option<f64>,
    pub variance_seconds: Option<f64>,
    pub peak_elements: Option<usize>,
    pub iterations: Option<usize>,
    pub alpha_discrepancy: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub fine_dims: Vec<usize>,
    pub group_dims: Vec<usize>,
    pub coef_dims: Vec<usize>,
    pub engines: Vec<EngineReport>,
}

impl BenchmarkReport {
    pub fn entry(&self, engine: Engine) -> Option<&EngineReport> {
        self.engines.iter().find(|e| e.engine == engine)
    }
}

/// Time each engine on the same problem, sequentially.
pub fn benchmark(problem: &PclmProblem, config: &SolverConfig, engines: &[Engine], budget: u128) -> BenchmarkReport {
    let mut reports = Vec::new();
    let mut glam_alpha: Option<Vec<f64>> = None;
    let mut naive_alpha: Option<Vec<f64>> = None;
    for &engine in engines {
        track::reset_peak();
        let report = match engine {
            Engine::Glam => {
                let t0 = Instant::now();
                let fitted = crate::solver::fit(problem, config);
                let fit_seconds = t0.elapsed().as_secs_f64();
                match fitted {
                    Err(e) => failed(engine, e),
                    Ok(res) => {
                        let t1 = Instant::now();
                        let var = crate::uncertainty::quantify(&res, problem, 0.95);
                        let variance_seconds = t1.elapsed().as_secs_f64();
                        glam_alpha = Some(res.alpha_hat.data().to_vec());
                        EngineReport {
                            engine,
                            fit_seconds: Some(fit_seconds),
                            variance_seconds: Some(variance_seconds),
                            peak_elements: Some(track::peak_elements()),
                            iterations: Some(res.iterations),
                            alpha_discrepancy: None,
                            status: status(res.converged, var.err()),
                        }
                    }
                }
            }
            Engine::Naive => {
                let t0 = Instant::now();
                let fitted = fit_naive(problem, config, budget);
                let fit_seconds = t0.elapsed().as_secs_f64();
                match fitted {
                    Err(e) => failed(engine, e),
                    Ok(res) => {
                        let t1 = Instant::now();
                        let var = naive_covariance(&res, problem.penalty());
                        let variance_seconds = t1.elapsed().as_secs_f64();
                        naive_alpha = Some(res.alpha_hat.clone());
                        EngineReport {
                            engine,
                            fit_seconds: Some(fit_seconds),
                            variance_seconds: Some(variance_seconds),
                            peak_elements: Some(track::peak_elements()),
                            iterations: Some(res.iterations),
                            alpha_discrepancy: None,
                            status: status(res.converged, var.err()),
                        }
                    }
                }
            }
        };
        reports.push(report);
    }
    if let (Some(a), Some(b)) = (&glam_alpha, &naive_alpha) {
        let diff = crate::array::max_abs_diff(a, b);
        for r in &mut reports {
            r.alpha_discrepancy = Some(diff);
        }
    }
    BenchmarkReport {
        fine_dims: problem.fine_dims(),
        group_dims: problem.group_dims().to_vec(),
        coef_dims: problem.coef_dims(),
        engines: reports,
    }
}

fn failed(engine: Engine, e: PclmError) -> EngineReport {
    let status = match &e {
        PclmError::Resource { .. } => format!("infeasible: {e}"),
        _ => format!("failed: {e}"),
    };
    EngineReport {
        engine,
        fit_seconds: None,
        variance_seconds: None,
        peak_elements: None,
        iterations: None,
        alpha_discrepancy: None,
        status,
    }
}

fn status(converged: bool, variance_error: Option<PclmError>) -> String {
    match (converged, variance_error) {
        (_, Some(e)) => format!("failed: {e}"),
        (true, None) => "ok".to_string(),
        (false, None) => "not converged".to_string(),
    }
}

/// Alpha of a naive fit as an array over coefficient extents.
pub fn alpha_array(fit: &NaiveFit, problem: &PclmProblem) -> Result<NdArray> {
    NdArray::new(problem.coef_dims(), fit.alpha_hat.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_of_identities() {
        let i2 = DenseMatrix::identity(2);
        let i3 = DenseMatrix::identity(3);
        let k = build_full_kronecker(&[&i2, &i3], DEFAULT_ELEMENT_BUDGET).unwrap();
        assert_eq!(k, DenseMatrix::identity(6));
    }

    #[test]
    fn kron_factor_order() {
        // [X1, X2] gives X2 ⊗ X1
        let x1 = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let x2 = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0], &[2.0, 2.0]]).unwrap();
        let k = build_full_kronecker(&[&x1, &x2], DEFAULT_ELEMENT_BUDGET).unwrap();
        assert_eq!((k.rows(), k.cols()), (6, 4));
        for i2 in 0..3 {
            for j2 in 0..2 {
                for i1 in 0..2 {
                    for j1 in 0..2 {
                        assert_eq!(k[(i2 * 2 + i1, j2 * 2 + j1)], x2[(i2, j2)] * x1[(i1, j1)]);
                    }
                }
            }
        }
    }

    #[test]
    fn over_budget_is_refused() {
        let big = DenseMatrix::zeros(100, 10);
        let err = build_full_kronecker(&[&big, &big], 99_999).unwrap_err();
        assert!(matches!(err, PclmError::Resource { requested: 1_000_000, .. }));
    }

    #[test]
    fn engine_parsing() {
        assert_eq!("GLAM".parse::<Engine>().unwrap(), Engine::Glam);
        assert_eq!("naive".parse::<Engine>().unwrap(), Engine::Naive);
        assert!("fast".parse::<Engine>().is_err());
    }
}
