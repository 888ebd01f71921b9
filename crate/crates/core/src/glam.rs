//! Array arithmetic that applies Kronecker-structured operators one dimension
//! at a time.
//!
//! The nested rotated H-transform `rh(X_d, .. rh(X_2, rh(X_1, A)) ..)` equals
//! `(X_d ⊗ .. ⊗ X_1) vec(A)` while only ever holding arrays the size of one
//! nesting stage. Weighted inner products use the same nesting with row
//! tensors, followed by an index rearrangement back to matrix form.

use crate::array::{advance, DenseMatrix, MatRef, NdArray};
use crate::error::{PclmError, Result};
use crate::linalg::gemm;

/// Row tensor: row `i` of the result is `kron(row_i(x1), row_i(x2))`.
///
/// Column `j1 * c2 + j2` holds `x1[i, j1] * x2[i, j2]`, so entries of `x1`
/// vary slowly across the result's columns.
pub fn row_tensor(x1: MatRef<'_>, x2: MatRef<'_>) -> Result<DenseMatrix> {
    let n = x1.rows();
    if x2.rows() != n {
        return Err(PclmError::dim(format!("row tensor needs equal row counts, got {} and {}", n, x2.rows())));
    }
    let (c1, c2) = (x1.cols(), x2.cols());
    let mut out = DenseMatrix::zeros(n, c1 * c2);
    let buf = out.data_mut();
    for j1 in 0..c1 {
        for j2 in 0..c2 {
            let col = &mut buf[(j1 * c2 + j2) * n..(j1 * c2 + j2 + 1) * n];
            for (i, v) in col.iter_mut().enumerate() {
                *v = x1.get(i, j1) * x2.get(i, j2);
            }
        }
    }
    Ok(out)
}

fn check_first_extent(x: MatRef<'_>, a: &NdArray) -> Result<()> {
    if a.dims()[0] != x.cols() {
        return Err(PclmError::dim(format!(
            "matrix with {} columns cannot premultiply an array with first extent {} (extents {:?})",
            x.cols(),
            a.dims()[0],
            a.dims()
        )));
    }
    Ok(())
}

/// H-transform: premultiply the first dimension of `a` by `x`.
pub fn h_transform(x: MatRef<'_>, a: &NdArray) -> Result<NdArray> {
    check_first_extent(x, a)?;
    let c1 = a.dims()[0];
    let rest = a.len() / c1;
    let r = x.rows();
    let mut dims = a.dims().to_vec();
    dims[0] = r;
    let mut out = NdArray::zeros(dims)?;
    let (xd, rsx, csx) = x.raw();
    gemm(r, c1, rest, (xd, rsx, csx), (a.data(), 1, c1 as isize), (out.data_mut(), 1, r as isize));
    Ok(out)
}

/// Cycle the dimensions left by one: `c1 x c2 x .. x cd` becomes `c2 x .. x cd x c1`.
pub fn rotate(a: &NdArray) -> NdArray {
    let c1 = a.dims()[0];
    let rest = a.len() / c1;
    let mut dims: Vec<usize> = a.dims()[1..].to_vec();
    dims.push(c1);
    let mut out = NdArray::zeros(dims).expect("extents already validated");
    // rotation is the transpose of the c1 x rest unfolding
    let src = a.data();
    let dst = out.data_mut();
    const BLOCK: usize = 32;
    for jb in (0..rest).step_by(BLOCK) {
        for ib in (0..c1).step_by(BLOCK) {
            for j in jb..(jb + BLOCK).min(rest) {
                for i in ib..(ib + BLOCK).min(c1) {
                    dst[j + i * rest] = src[i + j * c1];
                }
            }
        }
    }
    out
}

/// Rotated H-transform `rotate(h_transform(x, a))`, computed in a single product.
pub fn rh(x: MatRef<'_>, a: &NdArray) -> Result<NdArray> {
    check_first_extent(x, a)?;
    let c1 = a.dims()[0];
    let rest = a.len() / c1;
    let r = x.rows();
    let mut dims: Vec<usize> = a.dims()[1..].to_vec();
    dims.push(r);
    let mut out = NdArray::zeros(dims)?;
    let (xd, rsx, csx) = x.raw();
    // out (rest x r) = A*' (rest x c1) * X' (c1 x r)
    gemm(rest, c1, r, (a.data(), c1 as isize, 1), (xd, csx, rsx), (out.data_mut(), 1, rest as isize));
    Ok(out)
}

/// `(X_d ⊗ .. ⊗ X_1) vec(a)` as `d` nested rotated H-transforms.
pub fn apply_tensor(mats: &[MatRef<'_>], a: &NdArray) -> Result<NdArray> {
    if mats.len() != a.ndim() {
        return Err(PclmError::dim(format!("{} factor matrices for a {}-dimensional array", mats.len(), a.ndim())));
    }
    for (k, (x, &c)) in mats.iter().zip(a.dims()).enumerate() {
        if x.cols() != c {
            return Err(PclmError::dim(format!(
                "dimension {}: factor has {} columns but the array extent is {}",
                k + 1,
                x.cols(),
                c
            )));
        }
    }
    let mut iter = mats.iter();
    let first = iter.next().expect("at least one dimension");
    let mut acc = rh(*first, a)?;
    for x in iter {
        acc = rh(*x, &acc)?;
    }
    Ok(acc)
}

/// `B' diag(vec(w)) B` for `B = B_d ⊗ .. ⊗ B_1`, never forming `B`.
pub fn weighted_inner_product(bases: &[MatRef<'_>], w: &NdArray) -> Result<DenseMatrix> {
    if bases.len() != w.ndim() {
        return Err(PclmError::dim(format!("{} bases for a {}-dimensional weight array", bases.len(), w.ndim())));
    }
    for (k, (b, &m)) in bases.iter().zip(w.dims()).enumerate() {
        if b.rows() != m {
            return Err(PclmError::dim(format!(
                "dimension {}: basis has {} rows but the weight extent is {}",
                k + 1,
                b.rows(),
                m
            )));
        }
    }
    let tensors = bases.iter().map(|b| row_tensor(*b, *b)).collect::<Result<Vec<_>>>()?;
    let views: Vec<MatRef<'_>> = tensors.iter().map(|g| g.t()).collect();
    let packed = apply_tensor(&views, w)?;
    let c: Vec<usize> = bases.iter().map(|b| b.cols()).collect();
    rearrange_inner(&packed, &c)
}

/// Unfold an array whose extent `k` is `slow[k] * fast[k]` into a
/// `prod(slow) x prod(fast)` matrix.
///
/// Index `a_k = p_k * fast[k] + q_k` along dimension `k` goes to row
/// `(p_1, .., p_d)` and column `(q_1, .., q_d)`, both linearized
/// first-index-fastest.
pub fn unfold_pairs(packed: &NdArray, slow: &[usize], fast: &[usize]) -> Result<DenseMatrix> {
    check_pairs(packed.dims(), slow, fast)?;
    let rows: usize = slow.iter().product();
    let cols: usize = fast.iter().product();
    let mut out = DenseMatrix::zeros(rows, cols);
    let dst = out.data_mut();
    for_each_pair(packed.dims(), slow, fast, |flat, row, col| {
        dst[row + col * rows] = packed.data()[flat];
    });
    Ok(out)
}

/// Inverse of [`unfold_pairs`].
pub fn fold_pairs(mat: &DenseMatrix, slow: &[usize], fast: &[usize]) -> Result<NdArray> {
    let rows: usize = slow.iter().product();
    let cols: usize = fast.iter().product();
    if mat.rows() != rows || mat.cols() != cols {
        return Err(PclmError::dim(format!(
            "matrix is {}x{} but the pair extents imply {rows}x{cols}",
            mat.rows(),
            mat.cols()
        )));
    }
    let dims: Vec<usize> = slow.iter().zip(fast).map(|(s, f)| s * f).collect();
    let mut out = NdArray::zeros(dims.clone())?;
    let src = mat.data();
    let dst = out.data_mut();
    for_each_pair(&dims, slow, fast, |flat, row, col| {
        dst[flat] = src[row + col * rows];
    });
    Ok(out)
}

/// Rearrange the `c1² x .. x cd²` inner-product array into the `C x C` matrix.
pub fn rearrange_inner(packed: &NdArray, c: &[usize]) -> Result<DenseMatrix> {
    for (k, (&e, &ck)) in packed.dims().iter().zip(c).enumerate() {
        if e != ck * ck {
            return Err(PclmError::dim(format!("dimension {}: extent {e} is not {ck}²", k + 1)));
        }
    }
    unfold_pairs(packed, c, c)
}

/// Reorganize a `C x C` matrix into the `c1² x .. x cd²` array; inverse of [`rearrange_inner`].
pub fn rearrange_v(v: &DenseMatrix, c: &[usize]) -> Result<NdArray> {
    let total: usize = c.iter().product();
    if v.rows() != total || v.cols() != total {
        return Err(PclmError::dim(format!(
            "matrix is {}x{} but the product of extents {:?} is {total}",
            v.rows(),
            v.cols(),
            c
        )));
    }
    fold_pairs(v, c, c)
}

fn check_pairs(dims: &[usize], slow: &[usize], fast: &[usize]) -> Result<()> {
    if dims.len() != slow.len() || dims.len() != fast.len() {
        return Err(PclmError::dim(format!(
            "array has {} dimensions, pair extents have {} and {}",
            dims.len(),
            slow.len(),
            fast.len()
        )));
    }
    for (k, ((&e, &s), &f)) in dims.iter().zip(slow).zip(fast).enumerate() {
        if e != s * f {
            return Err(PclmError::dim(format!("dimension {}: extent {e} is not {s} x {f}", k + 1)));
        }
    }
    Ok(())
}

fn for_each_pair(dims: &[usize], slow: &[usize], fast: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let d = dims.len();
    // per-dimension row and column offsets of every index along that dimension
    let mut row_off = Vec::with_capacity(d);
    let mut col_off = Vec::with_capacity(d);
    let (mut rs, mut cs) = (1usize, 1usize);
    for k in 0..d {
        row_off.push((0..dims[k]).map(|a| (a / fast[k]) * rs).collect::<Vec<_>>());
        col_off.push((0..dims[k]).map(|a| (a % fast[k]) * cs).collect::<Vec<_>>());
        rs *= slow[k];
        cs *= fast[k];
    }
    let inner = dims[0];
    let outer: usize = dims[1..].iter().product();
    let mut idx = vec![0usize; d - 1];
    for o in 0..outer {
        let (mut row, mut col) = (0, 0);
        for (k, &i) in idx.iter().enumerate() {
            row += row_off[k + 1][i];
            col += col_off[k + 1][i];
        }
        let base = o * inner;
        for (a, (r, c)) in row_off[0].iter().zip(&col_off[0]).enumerate() {
            f(base + a, row + r, col + c);
        }
        advance(&mut idx, &dims[1..]);
    }
}
