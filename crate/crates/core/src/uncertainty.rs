//! Covariance of the fitted coefficients and pointwise bands for the linear predictor.
//!
//! The information matrix `B'ΓC'W⁻¹CΓB` has no pure array form, but its
//! factor `B'ΓC'` does: it is one nested transform of `Γ*` with row tensors
//! `G(B_k, C_k')`. The result is reshaped to `C x N` and weighted by `1/μ`.
//! Standard errors of `η̂` come from `diag(BVB')`, which again has an array
//! form once `V` is folded into a `c1² x .. x cd²` array.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::array::{DenseMatrix, MatRef, NdArray};
use crate::error::{PclmError, Result};
use crate::glam::{apply_tensor, rearrange_v, row_tensor, unfold_pairs};
use crate::linalg::Cholesky;
use crate::problem::PclmProblem;
use crate::solver::{trace_of_product, FitResult};

/// `(B_d ⊗ .. ⊗ B_1)' diag(γ) (C_d ⊗ .. ⊗ C_1)'` as a `C x N` matrix.
pub fn compute_bgc(bases: &[MatRef<'_>], comps: &[MatRef<'_>], gamma: &NdArray) -> Result<DenseMatrix> {
    let d = gamma.ndim();
    if bases.len() != d || comps.len() != d {
        return Err(PclmError::dim(format!(
            "{} bases and {} composition matrices for a {d}-dimensional latent array",
            bases.len(),
            comps.len()
        )));
    }
    let mut tensors = Vec::with_capacity(d);
    for (k, (b, c)) in bases.iter().zip(comps).enumerate() {
        if c.cols() != b.rows() || b.rows() != gamma.dims()[k] {
            return Err(PclmError::dim(format!(
                "dimension {}: basis rows {}, composition columns {}, latent extent {}",
                k + 1,
                b.rows(),
                c.cols(),
                gamma.dims()[k]
            )));
        }
        tensors.push(row_tensor(*b, c.t())?);
    }
    let views: Vec<MatRef<'_>> = tensors.iter().map(|g| g.t()).collect();
    let packed = apply_tensor(&views, gamma)?;
    let c: Vec<usize> = bases.iter().map(|b| b.cols()).collect();
    let n: Vec<usize> = comps.iter().map(|m| m.rows()).collect();
    unfold_pairs(&packed, &c, &n)
}

/// `bgc diag(w) bgc'` with `w = 1/μ`; groups with `μ ≤ 0` get weight zero.
pub fn information_matrix(bgc: &DenseMatrix, mu: &NdArray) -> Result<DenseMatrix> {
    if bgc.cols() != mu.len() {
        return Err(PclmError::dim(format!("B'ΓC' has {} columns but there are {} groups", bgc.cols(), mu.len())));
    }
    let rows = bgc.rows();
    let mut scaled = bgc.clone();
    for (g, &m) in mu.data().iter().enumerate() {
        let w = if m > 0.0 && m.is_finite() { m.sqrt().recip() } else { 0.0 };
        for v in &mut scaled.data_mut()[g * rows..(g + 1) * rows] {
            *v *= w;
        }
    }
    let mut h = scaled.view().matmul(scaled.t())?;
    symmetrize(&mut h);
    Ok(h)
}

fn symmetrize(m: &mut DenseMatrix) {
    let n = m.rows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn invert_spd(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(Cholesky::factor(a)?.inverse())
}

/// `V = (bgc diag(1/μ) bgc' + P)⁻¹`.
pub fn compute_v(bgc: &DenseMatrix, mu: &NdArray, penalty: &DenseMatrix) -> Result<DenseMatrix> {
    invert_spd(&information_matrix(bgc, mu)?.add(penalty)?)
}

/// `diag((B_d ⊗ .. ⊗ B_1) V (B_d ⊗ .. ⊗ B_1)')` arranged over the fine grid.
pub fn diag_bvb(v: &DenseMatrix, bases: &[MatRef<'_>]) -> Result<NdArray> {
    let c: Vec<usize> = bases.iter().map(|b| b.cols()).collect();
    let folded = rearrange_v(v, &c)?;
    let tensors = bases.iter().map(|b| row_tensor(*b, *b)).collect::<Result<Vec<_>>>()?;
    let views: Vec<MatRef<'_>> = tensors.iter().map(|g| g.view()).collect();
    let mut out = apply_tensor(&views, &folded)?;
    for (i, val) in out.data_mut().iter_mut().enumerate() {
        if *val < 0.0 {
            if *val < -1e-10 {
                return Err(PclmError::numerical(format!("negative variance {val:e} at fine cell {i}")));
            }
            *val = 0.0;
        }
    }
    Ok(out)
}

/// Pointwise bounds on the rate scale, `exp(η̂ ± z se)`.
#[derive(Debug, Clone)]
pub struct Intervals {
    pub level: f64,
    pub z: f64,
    pub lower: NdArray,
    pub upper: NdArray,
}

pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PclmError::invalid(format!("confidence level must lie strictly between 0 and 1, got {level}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

pub fn confidence_intervals(eta_hat: &NdArray, se_eta: &NdArray, level: f64) -> Result<Intervals> {
    let z = normal_quantile(level)?;
    Ok(Intervals {
        level,
        z,
        lower: eta_hat.zip_map(se_eta, |e, s| (e - z * s).exp())?,
        upper: eta_hat.zip_map(se_eta, |e, s| (e + z * s).exp())?,
    })
}

#[derive(Debug, Clone)]
pub struct VarianceResult {
    pub v: DenseMatrix,
    pub se_eta: NdArray,
    pub intervals: Intervals,
    pub effective_dimension: f64,
}

/// Post-convergence uncertainty: covariance, standard errors, intervals and
/// effective dimension, all from a single evaluation of `V`.
pub fn quantify(fit: &FitResult, problem: &PclmProblem, level: f64) -> Result<VarianceResult> {
    let bases = problem.basis_views();
    let bgc = compute_bgc(&bases, &problem.comp_views(), &fit.gamma_hat)?;
    let h0 = information_matrix(&bgc, &fit.mu_hat)?;
    drop(bgc);
    let v = invert_spd(&h0.add(problem.penalty())?)?;
    let effective_dimension = trace_of_product(&v, &h0);
    let se_eta = diag_bvb(&v, &bases)?.map(f64::sqrt);
    let intervals = confidence_intervals(&fit.eta_hat, &se_eta, level)?;
    Ok(VarianceResult { v, se_eta, intervals, effective_dimension })
}
