//! Building blocks of the model: marginal B-spline bases, difference
//! penalties and marginal composition matrices.

use crate::array::{DenseMatrix, MatRef, NdArray};
use crate::error::{PclmError, Result};
use crate::glam::apply_tensor;

/// Equally spaced B-spline basis over `[xmin, xmax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub n_intervals: usize,
    pub degree: usize,
}

impl BasisSpec {
    pub fn new(xmin: f64, xmax: f64, n_intervals: usize, degree: usize) -> Result<Self> {
        let spec = Self { xmin, xmax, n_intervals, degree };
        spec.validate()?;
        Ok(spec)
    }

    /// Basis over `[xmin, xmax]` with `n_basis` columns.
    pub fn with_size(xmin: f64, xmax: f64, n_basis: usize, degree: usize) -> Result<Self> {
        if n_basis <= degree {
            return Err(PclmError::invalid(format!(
                "a degree-{degree} basis needs more than {degree} columns, got {n_basis}"
            )));
        }
        Self::new(xmin, xmax, n_basis - degree, degree)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xmin < self.xmax) || !self.xmin.is_finite() || !self.xmax.is_finite() {
            return Err(PclmError::invalid(format!(
                "basis domain [{}, {}] is empty or not finite",
                self.xmin, self.xmax
            )));
        }
        if self.n_intervals == 0 {
            return Err(PclmError::invalid("basis needs at least one knot interval"));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.n_intervals + self.degree
    }

    fn knot_spacing(&self) -> f64 {
        (self.xmax - self.xmin) / self.n_intervals as f64
    }

    /// Full knot vector: equally spaced, extended `degree` knots past each boundary.
    pub fn knots(&self) -> Vec<f64> {
        let dx = self.knot_spacing();
        let start = self.xmin - self.degree as f64 * dx;
        (0..=self.n_intervals + 2 * self.degree).map(|k| start + k as f64 * dx).collect()
    }
}

/// Evaluate the basis at each coordinate; rows are coordinates, columns basis functions.
pub fn build_bspline_basis(spec: &BasisSpec, x: &[f64]) -> Result<DenseMatrix> {
    spec.validate()?;
    if x.is_empty() {
        return Err(PclmError::invalid("no coordinates to evaluate the basis at"));
    }
    let deg = spec.degree;
    let knots = spec.knots();
    let dx = spec.knot_spacing();
    let mut out = DenseMatrix::zeros(x.len(), spec.n_basis());
    let mut left = vec![0.0; deg + 1];
    let mut right = vec![0.0; deg + 1];
    let mut vals = vec![0.0; deg + 1];
    for (row, &xi) in x.iter().enumerate() {
        if !(xi >= spec.xmin && xi <= spec.xmax) {
            return Err(PclmError::Domain { value: xi, min: spec.xmin, max: spec.xmax });
        }
        // domain interval q, with the right boundary closed onto the last interval
        let q = (((xi - spec.xmin) / dx).floor() as usize).min(spec.n_intervals - 1);
        let span = q + deg;
        vals[0] = 1.0;
        for j in 1..=deg {
            left[j] = xi - knots[span + 1 - j];
            right[j] = knots[span + j] - xi;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        for (r, &v) in vals.iter().enumerate() {
            out[(row, q + r)] = v;
        }
    }
    Ok(out)
}

/// `(c - order) x c` matrix of `order`-th differences.
pub fn build_difference_matrix(c: usize, order: usize) -> Result<DenseMatrix> {
    if order >= c {
        return Err(PclmError::dim(format!("difference order {order} needs more than {order} coefficients, got {c}")));
    }
    let mut d = DenseMatrix::identity(c);
    for _ in 0..order {
        d = DenseMatrix::from_fn(d.rows() - 1, c, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    Ok(d)
}

/// Per-dimension smoothing parameters and the difference order shared by all dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub lambdas: Vec<f64>,
    pub order: usize,
}

impl PenaltySpec {
    pub fn new(lambdas: Vec<f64>, order: usize) -> Result<Self> {
        let spec = Self { lambdas, order };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(PclmError::invalid("at least one smoothing parameter is required"));
        }
        if let Some((k, l)) = self.lambdas.iter().enumerate().find(|(_, l)| !(**l >= 0.0) || !l.is_finite()) {
            return Err(PclmError::invalid(format!(
                "smoothing parameter for dimension {} must be finite and non-negative, got {l}",
                k + 1
            )));
        }
        if self.order == 0 {
            return Err(PclmError::invalid("difference order must be at least 1"));
        }
        Ok(())
    }
}

/// `sum_k λ_k (I ⊗ .. ⊗ D_k'D_k ⊗ .. ⊗ I)` with dimension 1 fastest.
pub fn build_penalty(c: &[usize], spec: &PenaltySpec) -> Result<DenseMatrix> {
    spec.validate()?;
    if spec.lambdas.len() != c.len() {
        return Err(PclmError::dim(format!("{} smoothing parameters for {} dimensions", spec.lambdas.len(), c.len())));
    }
    let total: usize = c.iter().product();
    let mut p = DenseMatrix::zeros(total, total);
    for (k, (&ck, &lambda)) in c.iter().zip(&spec.lambdas).enumerate() {
        let d = build_difference_matrix(ck, spec.order)?;
        let dtd = d.t().matmul(d.view())?;
        let inner: usize = c[..k].iter().product();
        let outer: usize = c[k + 1..].iter().product();
        let term = DenseMatrix::identity(outer).kron(&dtd).kron(&DenseMatrix::identity(inner));
        for (pv, tv) in p.data_mut().iter_mut().zip(term.data()) {
            *pv += lambda * tv;
        }
    }
    Ok(p)
}

/// Contiguous, disjoint, exhaustive grouping of the fine indices `0..m` of one dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingSpec {
    starts: Vec<usize>,
    m: usize,
}

impl GroupingSpec {
    /// Groups given by their first fine index (zero-based); group `r` spans
    /// `starts[r]..starts[r + 1]` and the last one runs to `m`.
    pub fn from_starts(starts: Vec<usize>, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(PclmError::invalid("fine dimension must have at least one cell"));
        }
        match starts.first() {
            None => return Err(PclmError::invalid("grouping has no groups")),
            Some(&s) if s != 0 => {
                return Err(PclmError::invalid(format!("gap in grouping: fine cells 0..{s} belong to no group")))
            }
            _ => {}
        }
        for (r, w) in starts.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(PclmError::invalid(format!(
                    "groups {} and {} overlap or are out of order (starts {} and {})",
                    r + 1,
                    r + 2,
                    w[0],
                    w[1]
                )));
            }
        }
        let last = *starts.last().expect("non-empty");
        if last >= m {
            return Err(PclmError::invalid(format!("group starting at {last} lies beyond the {m} fine cells")));
        }
        Ok(Self { starts, m })
    }

    /// Every fine cell in its own group.
    pub fn identity(m: usize) -> Result<Self> {
        Self::from_starts((0..m).collect(), m)
    }

    /// Consecutive groups of `width` cells; the last group takes the remainder.
    pub fn uniform(m: usize, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(PclmError::invalid("group width must be positive"));
        }
        Self::from_starts((0..m).step_by(width).collect(), m)
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn n_groups(&self) -> usize {
        self.starts.len()
    }

    pub fn n_fine(&self) -> usize {
        self.m
    }

    pub fn group_range(&self, r: usize) -> std::ops::Range<usize> {
        let end = self.starts.get(r + 1).copied().unwrap_or(self.m);
        self.starts[r]..end
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        (0..self.n_groups()).map(|r| self.group_range(r).len()).collect()
    }

    /// Group containing fine cell `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.starts.partition_point(|&s| s <= i) - 1
    }
}

/// 0/1 matrix `n x m` mapping fine cells to groups; each column holds exactly one 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    matrix: DenseMatrix,
    grouping: GroupingSpec,
}

impl CompositionMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn view(&self) -> MatRef<'_> {
        self.matrix.view()
    }

    pub fn grouping(&self) -> &GroupingSpec {
        &self.grouping
    }

    pub fn n_groups(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_fine(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn build_composition(grouping: &GroupingSpec, m: usize) -> Result<CompositionMatrix> {
    if grouping.n_fine() != m {
        return Err(PclmError::dim(format!(
            "grouping covers {} fine cells but the dimension has {m}",
            grouping.n_fine()
        )));
    }
    let mut matrix = DenseMatrix::zeros(grouping.n_groups(), m);
    for r in 0..grouping.n_groups() {
        for i in grouping.group_range(r) {
            matrix[(r, i)] = 1.0;
        }
    }
    Ok(CompositionMatrix { matrix, grouping: grouping.clone() })
}

/// Group totals of a fine array: `(C_d ⊗ .. ⊗ C_1) vec(fine)`.
pub fn aggregate(fine: &NdArray, comps: &[CompositionMatrix]) -> Result<NdArray> {
    let views: Vec<MatRef<'_>> = comps.iter().map(|c| c.view()).collect();
    apply_tensor(&views, fine)
}
