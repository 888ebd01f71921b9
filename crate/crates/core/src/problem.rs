//! Problem definition and solver settings.

use crate::array::{DenseMatrix, MatRef, NdArray};
use crate::components::{build_penalty, CompositionMatrix, PenaltySpec};
use crate::error::{PclmError, Result};

/// Grouped counts together with everything needed to model their latent distribution.
#[derive(Debug, Clone)]
pub struct PclmProblem {
    y: NdArray,
    exposures: Option<NdArray>,
    comps: Vec<CompositionMatrix>,
    bases: Vec<DenseMatrix>,
    penalty_spec: PenaltySpec,
    penalty: DenseMatrix,
}

impl PclmProblem {
    pub fn new(
        y: NdArray,
        exposures: Option<NdArray>,
        comps: Vec<CompositionMatrix>,
        bases: Vec<DenseMatrix>,
        penalty_spec: PenaltySpec,
    ) -> Result<Self> {
        let d = y.ndim();
        if comps.len() != d || bases.len() != d || penalty_spec.lambdas.len() != d {
            return Err(PclmError::dim(format!(
                "{d}-dimensional counts with {} composition matrices, {} bases and {} smoothing parameters",
                comps.len(),
                bases.len(),
                penalty_spec.lambdas.len()
            )));
        }
        for k in 0..d {
            if comps[k].n_groups() != y.dims()[k] {
                return Err(PclmError::dim(format!(
                    "dimension {}: {} observed groups but the composition matrix has {} rows",
                    k + 1,
                    y.dims()[k],
                    comps[k].n_groups()
                )));
            }
            if bases[k].rows() != comps[k].n_fine() {
                return Err(PclmError::dim(format!(
                    "dimension {}: basis has {} rows but there are {} fine cells",
                    k + 1,
                    bases[k].rows(),
                    comps[k].n_fine()
                )));
            }
            if penalty_spec.order >= bases[k].cols() {
                return Err(PclmError::invalid(format!(
                    "dimension {}: difference order {} needs more than {} basis functions",
                    k + 1,
                    penalty_spec.order,
                    bases[k].cols()
                )));
            }
        }
        if let Some(bad) = y.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(PclmError::invalid(format!("counts must be finite and non-negative, found {bad}")));
        }
        if !(y.sum() > 0.0) {
            return Err(PclmError::invalid("all grouped counts are zero"));
        }
        let fine: Vec<usize> = comps.iter().map(|c| c.n_fine()).collect();
        if let Some(e) = &exposures {
            if e.dims() != fine.as_slice() {
                return Err(PclmError::dim(format!(
                    "exposures have extents {:?} but the fine grid is {:?}",
                    e.dims(),
                    fine
                )));
            }
            if let Some(bad) = e.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(PclmError::invalid(format!("exposures must be finite and non-negative, found {bad}")));
            }
            let positive = e.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let covered = crate::components::aggregate(&positive, &comps)?;
            let mut idx = vec![0usize; d];
            for (g, (&cnt, &yg)) in covered.data().iter().zip(y.data()).enumerate() {
                if cnt == 0.0 && yg > 0.0 {
                    unflatten(g, y.dims(), &mut idx);
                    return Err(PclmError::invalid(format!(
                        "group {idx:?} has {yg} counts but zero exposure in every cell"
                    )));
                }
            }
        }
        let c: Vec<usize> = bases.iter().map(|b| b.cols()).collect();
        let penalty = build_penalty(&c, &penalty_spec)?;
        Ok(Self { y, exposures, comps, bases, penalty_spec, penalty })
    }

    /// Same data and bases with different smoothing parameters.
    pub fn with_lambdas(&self, lambdas: Vec<f64>) -> Result<Self> {
        let spec = PenaltySpec::new(lambdas, self.penalty_spec.order)?;
        Self::new(self.y.clone(), self.exposures.clone(), self.comps.clone(), self.bases.clone(), spec)
    }

    pub fn y(&self) -> &NdArray {
        &self.y
    }

    pub fn exposures(&self) -> Option<&NdArray> {
        self.exposures.as_ref()
    }

    pub fn comps(&self) -> &[CompositionMatrix] {
        &self.comps
    }

    pub fn bases(&self) -> &[DenseMatrix] {
        &self.bases
    }

    pub fn penalty_spec(&self) -> &PenaltySpec {
        &self.penalty_spec
    }

    /// Explicit `C x C` penalty matrix.
    pub fn penalty(&self) -> &DenseMatrix {
        &self.penalty
    }

    pub fn ndim(&self) -> usize {
        self.y.ndim()
    }

    pub fn group_dims(&self) -> &[usize] {
        self.y.dims()
    }

    pub fn fine_dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.rows()).collect()
    }

    pub fn coef_dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.cols()).collect()
    }

    pub fn n_coef(&self) -> usize {
        self.coef_dims().iter().product()
    }

    pub fn basis_views(&self) -> Vec<MatRef<'_>> {
        self.bases.iter().map(|b| b.view()).collect()
    }

    pub fn basis_transposes(&self) -> Vec<MatRef<'_>> {
        self.bases.iter().map(|b| b.t()).collect()
    }

    pub fn comp_views(&self) -> Vec<MatRef<'_>> {
        self.comps.iter().map(|c| c.view()).collect()
    }

    pub fn comp_transposes(&self) -> Vec<MatRef<'_>> {
        self.comps.iter().map(|c| c.matrix().t()).collect()
    }

    /// Number of fine cells in each group, as an array over the group grid.
    pub fn group_sizes(&self) -> NdArray {
        let sizes: Vec<Vec<usize>> = self.comps.iter().map(|c| c.grouping().group_sizes()).collect();
        NdArray::from_fn(self.y.dims().to_vec(), |idx| idx.iter().zip(&sizes).map(|(&i, s)| s[i] as f64).product())
            .expect("group extents are positive")
    }
}

pub(crate) fn unflatten(mut flat: usize, dims: &[usize], idx: &mut [usize]) {
    for (i, &m) in idx.iter_mut().zip(dims) {
        *i = flat % m;
        flat /= m;
    }
}

/// Iteration controls for the scoring algorithm.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Stop once the largest coefficient change falls below this.
    pub tol_alpha: f64,
    /// Or once the relative change of the penalized log-likelihood falls below this.
    pub tol_loglik: f64,
    pub max_iter: usize,
    pub max_step_halvings: usize,
    /// Lower clamp on latent means, keeps divisions finite.
    pub gamma_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol_alpha: 1e-6, tol_loglik: 1e-8, max_iter: 200, max_step_halvings: 10, gamma_floor: 1e-10 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tol_alpha", self.tol_alpha), ("gamma_floor", self.gamma_floor)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PclmError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        // zero switches the log-likelihood stopping rule off
        if !(self.tol_loglik >= 0.0) || !self.tol_loglik.is_finite() {
            return Err(PclmError::invalid(format!("tol_loglik must be non-negative, got {}", self.tol_loglik)));
        }
        if self.max_iter == 0 {
            return Err(PclmError::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}
