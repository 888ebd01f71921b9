//! Dense kernels: strided matrix product and a Cholesky factorization for the
//! symmetric positive definite systems that the solver produces.

use crate::array::DenseMatrix;
use crate::error::{PclmError, Result};

type Strided<'a> = (&'a [f64], isize, isize);
type StridedMut<'a> = (&'a mut [f64], isize, isize);

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows as isize - 1) * rs + (cols as isize - 1) * cs) as usize + 1
}

/// `c = a * b` for an `m x k` by `k x n` product on arbitrary non-negative strides.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: Strided<'_>, b: Strided<'_>, c: StridedMut<'_>) {
    gemm_scaled(m, k, n, 1.0, a, b, 0.0, c);
}

/// `c = alpha * a * b + beta * c`.
#[allow(clippy::too_many_arguments)]
fn gemm_scaled(m: usize, k: usize, n: usize, alpha: f64, a: Strided<'_>, b: Strided<'_>, beta: f64, c: StridedMut<'_>) {
    let (a, rsa, csa) = a;
    let (b, rsb, csb) = b;
    let (c, rsc, csc) = c;
    assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
    assert!(a.len() >= extent(m, k, rsa, csa), "lhs buffer too small");
    assert!(b.len() >= extent(k, n, rsb, csb), "rhs buffer too small");
    assert!(c.len() >= extent(m, n, rsc, csc), "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for j in 0..n {
            for i in 0..m {
                let v = &mut c[i * rsc as usize + j * csc as usize];
                *v *= beta;
            }
        }
        return;
    }
    // SAFETY: the asserts above guarantee every strided access is in bounds,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

const BLOCK: usize = 48;

/// Lower-triangular Cholesky factor `A = L L'`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // column-major, only the lower triangle is meaningful
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix. Only the lower triangle is read.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(PclmError::dim(format!("Cholesky needs a square matrix, got {}x{}", n, a.cols())));
        }
        let mut l = a.data().to_vec();
        let mut panel = Vec::new();
        // right-looking blocked factorization; trailing updates go through gemm
        for kb in (0..n).step_by(BLOCK) {
            let kend = (kb + BLOCK).min(n);
            for j in kb..kend {
                let (done, rest) = l.split_at_mut(j * n);
                let col = &mut rest[..n];
                for p in kb..j {
                    let ljp = done[p * n + j];
                    axpy(-ljp, &done[p * n + j..p * n + n], &mut col[j..]);
                }
                let d = col[j];
                if !(d > 0.0) || !d.is_finite() {
                    return Err(PclmError::numerical(format!("matrix is not positive definite (pivot {j} = {d:e})")));
                }
                let d = d.sqrt();
                col[j] = d;
                col[j + 1..].iter_mut().for_each(|v| *v /= d);
            }
            let below = n - kend;
            if below == 0 {
                continue;
            }
            let width = kend - kb;
            panel.clear();
            for p in kb..kend {
                panel.extend_from_slice(&l[p * n + kend..p * n + n]);
            }
            // A22 -= L21 L21'
            gemm_scaled(
                below,
                width,
                below,
                -1.0,
                (&panel, 1, below as isize),
                (&panel, below as isize, 1),
                1.0,
                (&mut l[kend * n + kend..], 1, n as isize),
            );
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(PclmError::dim(format!("right-hand side of length {} for a system of size {n}", b.len())));
        }
        let mut x = b.to_vec();
        self.forward_from(0, &mut x);
        let l = &self.l;
        for i in (0..n).rev() {
            let s = dot(&l[i * n + i + 1..(i + 1) * n], &x[i + 1..]);
            x[i] = (x[i] - s) / l[i * n + i];
        }
        Ok(x)
    }

    /// `A^{-1}` as `L^{-T} L^{-1}`.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.n;
        let mut linv = DenseMatrix::zeros(n, n);
        {
            let buf = linv.data_mut();
            for j in 0..n {
                let col = &mut buf[j * n..(j + 1) * n];
                col[j] = 1.0;
                // column j of L^{-1} is zero above the diagonal
                self.forward_from(j, &mut col[j..]);
            }
        }
        let mut inv = linv.t().matmul(linv.view()).expect("square factors");
        // symmetrize away rounding differences between the two triangles
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// Overwrite `x` with the solution of the trailing triangular block of `L`
    /// that starts at row `start`.
    fn forward_from(&self, start: usize, x: &mut [f64]) {
        let n = self.n;
        let l = &self.l;
        for (jj, j) in (start..n).enumerate() {
            let xj = x[jj] / l[j * n + j];
            x[jj] = xj;
            if xj != 0.0 {
                axpy(-xj, &l[j * n + j + 1..(j + 1) * n], &mut x[jj + 1..]);
            }
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
