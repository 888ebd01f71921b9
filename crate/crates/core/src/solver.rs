//! Penalized scoring for the composite link model on the latent scale.
//!
//! Each iteration redistributes the observed group counts over the fine cells
//! in proportion to the current latent means (the working latent response),
//! forms the latent-scale working vector and solves
//! `(B'ΓB + P) α = B'Γz`. Every product with `B` or `C` goes through the
//! array kernels in [`crate::glam`], so neither full matrix is ever built.

use serde::{Deserialize, Serialize};

use crate::array::{DenseMatrix, MatRef, NdArray};
use crate::components::{aggregate, CompositionMatrix};
use crate::error::{PclmError, Result};
use crate::glam::{apply_tensor, weighted_inner_product};
use crate::linalg::Cholesky;
use crate::problem::{unflatten, PclmProblem, SolverConfig};

/// Quantities at the current coefficients.
#[derive(Debug, Clone)]
pub struct FitState {
    pub alpha: NdArray,
    pub eta: NdArray,
    pub gamma: NdArray,
    pub mu: NdArray,
    pub y_breve: NdArray,
    pub z: NdArray,
    pub pen_loglik: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub pen_loglik: f64,
    pub max_abs_delta: f64,
    pub step_halvings: usize,
    /// Largest relative gap between the re-aggregated working latent response and the counts.
    pub redistribution_error: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub alpha_hat: NdArray,
    pub eta_hat: NdArray,
    pub gamma_hat: NdArray,
    pub mu_hat: NdArray,
    pub iterations: usize,
    pub converged: bool,
    /// Rule that declared convergence, `None` when the fit did not converge.
    pub stop: Option<StopCriterion>,
    pub pen_loglik: f64,
    /// Filled in once the covariance has been computed.
    pub effective_dimension: Option<f64>,
    pub trace: Vec<IterationRecord>,
}

/// `η = (B_d ⊗ .. ⊗ B_1) α`.
pub fn compute_eta(alpha: &NdArray, bases: &[MatRef<'_>]) -> Result<NdArray> {
    apply_tensor(bases, alpha)
}

/// `γ = e ⊙ exp(η)` (or `exp(η)` without exposures), clamped below at `floor`.
pub fn compute_gamma(eta: &NdArray, exposures: Option<&NdArray>, floor: f64) -> Result<NdArray> {
    match exposures {
        None => Ok(eta.map(|v| v.exp().max(floor))),
        Some(e) => eta.zip_map(e, |v, e| (e * v.exp()).max(floor)),
    }
}

/// `μ = C γ`.
pub fn compute_mu(gamma: &NdArray, comps: &[CompositionMatrix]) -> Result<NdArray> {
    aggregate(gamma, comps)
}

/// `y̆ = (C'(y ⊘ μ)) ⊙ γ`: counts redistributed over the fine cells.
pub fn working_latent_response(
    gamma: &NdArray,
    mu: &NdArray,
    y: &NdArray,
    comps: &[CompositionMatrix],
    floor: f64,
) -> Result<NdArray> {
    if mu.dims() != y.dims() {
        return Err(PclmError::dim(format!(
            "expected values {:?} and counts {:?} differ in extent",
            mu.dims(),
            y.dims()
        )));
    }
    let sizes: Vec<Vec<usize>> = comps.iter().map(|c| c.grouping().group_sizes()).collect();
    let mut idx = vec![0usize; y.ndim()];
    let mut ratio = Vec::with_capacity(y.len());
    for (g, (&yg, &mg)) in y.data().iter().zip(mu.data()).enumerate() {
        if yg > 0.0 {
            unflatten(g, y.dims(), &mut idx);
            let size: f64 = idx.iter().zip(&sizes).map(|(&i, s)| s[i] as f64).product();
            if !(mg > floor * size * (1.0 + 1e-9)) {
                return Err(PclmError::numerical(format!(
                    "group {idx:?} has {yg} counts but its expected value {mg:e} has collapsed to the floor"
                )));
            }
            ratio.push(yg / mg);
        } else {
            ratio.push(0.0);
        }
    }
    let ratio = NdArray::new(y.dims().to_vec(), ratio)?;
    let transposes: Vec<MatRef<'_>> = comps.iter().map(|c| c.matrix().t()).collect();
    let spread = apply_tensor(&transposes, &ratio)?;
    spread.zip_map(gamma, |s, g| s * g)
}

/// `z = η + (y̆ − γ) ⊘ γ`.
pub fn working_vector(eta: &NdArray, y_breve: &NdArray, gamma: &NdArray) -> Result<NdArray> {
    let resid = y_breve.zip_map(gamma, |yb, g| (yb - g) / g)?;
    eta.zip_map(&resid, |e, r| e + r)
}

/// Left and right sides of `(B'ΓB + P) α = B'Γz`.
pub fn build_system(state: &FitState, bases: &[MatRef<'_>], penalty: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let lhs = weighted_inner_product(bases, &state.gamma)?.add(penalty)?;
    let gz = state.gamma.zip_map(&state.z, |g, z| g * z)?;
    let transposes: Vec<MatRef<'_>> = bases.iter().map(|b| b.t()).collect();
    let rhs = apply_tensor(&transposes, &gz)?.into_data();
    Ok((lhs, rhs))
}

fn quad_form(p: &DenseMatrix, a: &[f64]) -> f64 {
    let pa = p.matvec(a).expect("penalty matches coefficients");
    pa.iter().zip(a).map(|(x, y)| x * y).sum()
}

/// `y' ln μ − 1'γ − ½ α'Pα` with groups of zero count contributing nothing to the first sum.
///
/// Returns `-inf` when a group with positive count has a non-positive mean.
pub fn loglik_from_parts(y: &NdArray, mu: &NdArray, gamma: &NdArray, alpha: &[f64], penalty: &DenseMatrix) -> f64 {
    let mut fit = 0.0;
    for (&yg, &mg) in y.data().iter().zip(mu.data()) {
        if yg > 0.0 {
            if !(mg > 0.0) {
                return f64::NEG_INFINITY;
            }
            fit += yg * mg.ln();
        }
    }
    fit - gamma.sum() - 0.5 * quad_form(penalty, alpha)
}

pub fn penalized_loglik(alpha: &NdArray, problem: &PclmProblem, floor: f64) -> Result<f64> {
    let eta = compute_eta(alpha, &problem.basis_views())?;
    let gamma = compute_gamma(&eta, problem.exposures(), floor)?;
    let mu = compute_mu(&gamma, problem.comps())?;
    Ok(loglik_from_parts(problem.y(), &mu, &gamma, alpha.data(), problem.penalty()))
}

/// Constant starting coefficients: `ln(Σy / Σe)`, or `ln(Σy / M)` without exposures.
pub fn initial_alpha(problem: &PclmProblem) -> Result<NdArray> {
    let total = problem.y().sum();
    let denom = match problem.exposures() {
        Some(e) => e.sum(),
        None => problem.fine_dims().iter().product::<usize>() as f64,
    };
    if !(total > 0.0 && denom > 0.0) {
        return Err(PclmError::invalid("cannot initialize: zero total count or exposure"));
    }
    NdArray::filled(problem.coef_dims(), (total / denom).ln())
}

struct Point {
    alpha: NdArray,
    eta: NdArray,
    gamma: NdArray,
    mu: NdArray,
    pen_loglik: f64,
}

impl Point {
    fn at(alpha: NdArray, problem: &PclmProblem, floor: f64) -> Result<Self> {
        let eta = compute_eta(&alpha, &problem.basis_views())?;
        let gamma = compute_gamma(&eta, problem.exposures(), floor)?;
        let mu = compute_mu(&gamma, problem.comps())?;
        let pen_loglik = loglik_from_parts(problem.y(), &mu, &gamma, alpha.data(), problem.penalty());
        Ok(Self { alpha, eta, gamma, mu, pen_loglik })
    }
}

/// Relative gap between `aggregate(y̆)` and `y`.
pub fn redistribution_error(y_breve: &NdArray, y: &NdArray, comps: &[CompositionMatrix]) -> Result<f64> {
    let back = aggregate(y_breve, comps)?;
    Ok(back
        .data()
        .iter()
        .zip(y.data())
        .map(|(&b, &yg)| if yg > 0.0 { (b - yg).abs() / yg } else { b.abs() })
        .fold(0.0, f64::max))
}

/// Relative drop in the penalized log-likelihood treated as rounding noise
/// rather than a genuine decrease.
pub(crate) const ROUNDING_SLACK: f64 = 1e-12;

/// Accept a trial point when the penalized log-likelihood does not drop by more than the tolerance.
pub(crate) fn acceptable(new: f64, old: f64, tol: f64) -> bool {
    new.is_finite() && new >= old - (tol + ROUNDING_SLACK) * old.abs().max(1.0)
}

/// Which stopping rule ended a converged fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Largest coefficient change fell below `tol_alpha`.
    Alpha,
    /// Relative penalized log-likelihood change fell below `tol_loglik`.
    LogLik,
}

pub(crate) fn stop_criterion(max_abs_delta: f64, change: f64, config: &SolverConfig) -> Option<StopCriterion> {
    if max_abs_delta < config.tol_alpha {
        Some(StopCriterion::Alpha)
    } else if change < config.tol_loglik {
        Some(StopCriterion::LogLik)
    } else {
        None
    }
}

pub(crate) fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / new.abs().max(1.0)
}

/// Fit the model by penalized scoring on the latent scale.
pub fn fit(problem: &PclmProblem, config: &SolverConfig) -> Result<FitResult> {
    config.validate()?;
    let floor = config.gamma_floor;
    let bases = problem.basis_views();
    let mut current = Point::at(initial_alpha(problem)?, problem, floor)?;
    let mut trace = Vec::new();
    let mut stop = None;

    for iter in 1..=config.max_iter {
        let y_breve = working_latent_response(&current.gamma, &current.mu, problem.y(), problem.comps(), floor)
            .map_err(|e| e.at_iteration(iter))?;
        let redistribution = redistribution_error(&y_breve, problem.y(), problem.comps())?;
        let z = working_vector(&current.eta, &y_breve, &current.gamma)?;
        let state = FitState {
            alpha: current.alpha.clone(),
            eta: current.eta.clone(),
            gamma: current.gamma.clone(),
            mu: current.mu.clone(),
            y_breve,
            z,
            pen_loglik: current.pen_loglik,
        };
        let (lhs, rhs) = build_system(&state, &bases, problem.penalty())?;
        let proposal = Cholesky::factor(&lhs).and_then(|c| c.solve(&rhs)).map_err(|e| e.at_iteration(iter))?;
        let delta: Vec<f64> = proposal.iter().zip(current.alpha.data()).map(|(p, a)| p - a).collect();

        let mut step = 1.0;
        let mut halvings = 0;
        let accepted = loop {
            let trial_alpha = NdArray::new(
                problem.coef_dims(),
                current.alpha.data().iter().zip(&delta).map(|(a, d)| a + step * d).collect(),
            )?;
            let trial = Point::at(trial_alpha, problem, floor)?;
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
            trace.push(IterationRecord {
                iteration: iter,
                pen_loglik: current.pen_loglik,
                max_abs_delta: 0.0,
                step_halvings: halvings,
                redistribution_error: redistribution,
            });
            break;
        };

        let max_abs_delta = delta.iter().fold(0.0f64, |m, d| m.max((step * d).abs()));
        let change = relative_change(next.pen_loglik, current.pen_loglik);
        trace.push(IterationRecord {
            iteration: iter,
            pen_loglik: next.pen_loglik,
            max_abs_delta,
            step_halvings: halvings,
            redistribution_error: redistribution,
        });
        current = next;
        stop = stop_criterion(max_abs_delta, change, config);
        if stop.is_some() {
            break;
        }
    }

    Ok(FitResult {
        iterations: trace.len(),
        converged: stop.is_some(),
        stop,
        pen_loglik: current.pen_loglik,
        alpha_hat: current.alpha,
        eta_hat: current.eta,
        gamma_hat: current.gamma,
        mu_hat: current.mu,
        effective_dimension: None,
        trace,
    })
}

/// `trace((H₀ + P)⁻¹ H₀)` with `H₀ = B'ΓC'W⁻¹CΓB` at the fitted values.
pub fn effective_dimension(fit: &FitResult, problem: &PclmProblem) -> Result<f64> {
    let bgc = crate::uncertainty::compute_bgc(&problem.basis_views(), &problem.comp_views(), &fit.gamma_hat)?;
    let h0 = crate::uncertainty::information_matrix(&bgc, &fit.mu_hat)?;
    let v = crate::uncertainty::invert_spd(&h0.add(problem.penalty())?)?;
    Ok(trace_of_product(&v, &h0))
}

/// `trace(A B)` for symmetric `B`.
pub(crate) fn trace_of_product(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Gradient of the penalized log-likelihood, `B'ΓC'W⁻¹y − B'γ − Pα`.
pub fn score(alpha: &NdArray, problem: &PclmProblem, floor: f64) -> Result<Vec<f64>> {
    let p = Point::at(alpha.clone(), problem, floor)?;
    let bgc = crate::uncertainty::compute_bgc(&problem.basis_views(), &problem.comp_views(), &p.gamma)?;
    let ratio: Vec<f64> =
        problem.y().data().iter().zip(p.mu.data()).map(|(&y, &m)| if y > 0.0 { y / m } else { 0.0 }).collect();
    let first = bgc.matvec(&ratio)?;
    let bg = apply_tensor(&problem.basis_transposes(), &p.gamma)?;
    let pa = problem.penalty().matvec(alpha.data())?;
    Ok(first.iter().zip(bg.data()).zip(&pa).map(|((f, b), q)| f - b - q).collect())
}

/// Gradient with the working latent response held fixed, `B'y̆ − B'γ − Pα`.
pub fn latent_score(alpha: &NdArray, y_breve: &NdArray, problem: &PclmProblem, floor: f64) -> Result<Vec<f64>> {
    let p = Point::at(alpha.clone(), problem, floor)?;
    let resid = y_breve.zip_map(&p.gamma, |yb, g| yb - g)?;
    let br = apply_tensor(&problem.basis_transposes(), &resid)?;
    let pa = problem.penalty().matvec(alpha.data())?;
    Ok(br.data().iter().zip(&pa).map(|(b, q)| b - q).collect())
}

/// Working latent response at `alpha`.
pub fn latent_response_at(alpha: &NdArray, problem: &PclmProblem, floor: f64) -> Result<NdArray> {
    let p = Point::at(alpha.clone(), problem, floor)?;
    working_latent_response(&p.gamma, &p.mu, problem.y(), problem.comps(), floor)
}

/// Hessian of the penalized log-likelihood of the redistributed counts, `−B'ΓB − P`.
pub fn latent_hessian(alpha: &NdArray, problem: &PclmProblem, floor: f64) -> Result<DenseMatrix> {
    let p = Point::at(alpha.clone(), problem, floor)?;
    let h = weighted_inner_product(&problem.basis_views(), &p.gamma)?.add(problem.penalty())?;
    Ok(h.scale(-1.0))
}

/// `−B'ΓC'W⁻¹CΓB − P`, the Hessian of the grouped-count log-likelihood with counts at their expectation.
pub fn information_hessian(alpha: &NdArray, problem: &PclmProblem, floor: f64) -> Result<DenseMatrix> {
    let p = Point::at(alpha.clone(), problem, floor)?;
    let bgc = crate::uncertainty::compute_bgc(&problem.basis_views(), &problem.comp_views(), &p.gamma)?;
    let h0 = crate::uncertainty::information_matrix(&bgc, &p.mu)?;
    Ok(h0.add(problem.penalty())?.scale(-1.0))
}
