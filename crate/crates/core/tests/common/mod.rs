#![allow(dead_code)]

use pclm::{
    build_bspline_basis, build_composition, BasisSpec, CompositionMatrix, DenseMatrix, GroupingSpec, NdArray,
    PclmProblem, PenaltySpec, SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_array(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> NdArray {
    NdArray::from_fn(dims.to_vec(), |_| rng.random_range(lo..hi)).unwrap()
}

// Plain triple-loop reference products; deliberately independent of the gemm path.

pub fn mul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn transpose(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// `a ⊗ b` straight from the definition.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (p, q) = (b.rows(), b.cols());
    DenseMatrix::from_fn(a.rows() * p, a.cols() * q, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)])
}

/// `X_d ⊗ .. ⊗ X_1` for factors listed as `[X_1, .., X_d]`.
pub fn kron_all(mats: &[DenseMatrix]) -> DenseMatrix {
    let mut acc = mats[0].clone();
    for m in &mats[1..] {
        acc = kron(m, &acc);
    }
    acc
}

pub fn matvec(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| (0..a.cols()).map(|k| a[(i, k)] * x[k]).sum()).collect()
}

/// `diag(w) a`.
pub fn scale_rows(a: &DenseMatrix, w: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| w[i] * a[(i, j)])
}

pub fn add(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + b[(i, j)])
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..2 * n)
                .map(|j| {
                    if j < n {
                        a[(i, j)]
                    } else if j - n == i {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        let pivot = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r != col && f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot) {
                    *v -= f * p;
                }
            }
        }
    }
    DenseMatrix::from_fn(n, n, |i, j| m[i][n + j])
}

pub fn max_abs(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs_vec(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cubic B-spline basis on the integer grid `0..m` with `c` columns.
pub fn basis(m: usize, c: usize) -> DenseMatrix {
    let x: Vec<f64> = (0..m).map(|i| i as f64).collect();
    let hi = if m > 1 { (m - 1) as f64 } else { 1.0 };
    build_bspline_basis(&BasisSpec::with_size(0.0, hi, c, 3).unwrap(), &x).unwrap()
}

/// Random contiguous grouping of `m` cells with at least `min_groups` groups.
pub fn random_grouping(rng: &mut ChaCha8Rng, m: usize, min_groups: usize) -> CompositionMatrix {
    loop {
        let mut starts = vec![0];
        for i in 1..m {
            if rng.random_bool(0.5) {
                starts.push(i);
            }
        }
        if starts.len() >= min_groups {
            return build_composition(&GroupingSpec::from_starts(starts, m).unwrap(), m).unwrap();
        }
    }
}

/// Small random problem: fine extents in `4..=max_m`, at least three groups
/// per dimension, `c_k` between 4 and `max(4, n_k)`, λ log-uniform on
/// `[1e-2, 1e3]`, counts drawn around a smooth surface.
pub fn random_problem(rng: &mut ChaCha8Rng, d: usize, max_m: usize, exposures: bool) -> PclmProblem {
    let m: Vec<usize> = (0..d).map(|_| rng.random_range(4..=max_m)).collect();
    let comps: Vec<CompositionMatrix> = m.iter().map(|&mk| random_grouping(rng, mk, 3)).collect();
    let n: Vec<usize> = comps.iter().map(|c| c.n_groups()).collect();
    let c: Vec<usize> = n.iter().map(|&nk| rng.random_range(4..=nk.max(4))).collect();
    let lambdas: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-2.0..3.0))).collect();
    let bases: Vec<DenseMatrix> = m.iter().zip(&c).map(|(&mk, &ck)| basis(mk, ck)).collect();
    let tilt: Vec<f64> = (0..d).map(|_| rng.random_range(-0.3..0.3)).collect();
    let level = rng.random_range(1.0..3.0);
    let e = exposures.then(|| random_array(rng, &m, 0.5, 2.0));
    let fine = NdArray::from_fn(m.clone(), |i| {
        let eta: f64 = level + i.iter().zip(&tilt).map(|(&ik, t)| t * ik as f64).sum::<f64>();
        eta.exp()
    })
    .unwrap();
    let fine = match &e {
        Some(e) => fine.zip_map(e, |g, e| g * e).unwrap(),
        None => fine,
    };
    let mean = pclm::aggregate(&fine, &comps).unwrap();
    let noise: Vec<f64> = (0..mean.len()).map(|_| rng.random_range(0.6..1.4)).collect();
    let y =
        NdArray::new(mean.dims().to_vec(), mean.data().iter().zip(&noise).map(|(mu, f)| (mu * f).round()).collect())
            .unwrap();
    PclmProblem::new(y, e, comps, bases, PenaltySpec::new(lambdas, 2).unwrap()).unwrap()
}

/// Settings that iterate both engines to their common fixed point.
pub fn tight_config() -> SolverConfig {
    SolverConfig { tol_alpha: 1e-11, tol_loglik: 0.0, max_iter: 100_000, ..SolverConfig::default() }
}
