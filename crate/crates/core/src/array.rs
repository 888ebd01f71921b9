//! Dense numeric containers.
//!
//! Both containers store elements first-index-fastest: element `(i1, .., id)`
//! lives at `i1 + m1*i2 + m1*m2*i3 + ...`. For a matrix this is column-major
//! storage, so flattening a matrix is the usual `vec` (column stacking) and a
//! full operator over a d-dimensional array factors as `X_d ⊗ ... ⊗ X_1`.

use crate::error::{PclmError, Result};
use crate::track;

/// Dense d-dimensional array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl NdArray {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(PclmError::dim(format!(
                "buffer of length {} does not match extents {:?} (product {len})",
                data.len(),
                dims
            )));
        }
        track::note(len);
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Result<Self> {
        validate_dims(&dims)?;
        let len = dims.iter().product();
        track::note(len);
        Ok(Self { dims, data: vec![value; len] })
    }

    /// Build an array by evaluating `f` at every multi-index.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            advance(&mut idx, &dims);
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &m) in index.iter().zip(&self.dims) {
            debug_assert!(i < m);
            off += i * stride;
            stride *= m;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        track::note(self.data.len());
        Self { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two arrays with identical extents.
    pub fn zip_map(&self, other: &NdArray, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(PclmError::dim(format!("extents {:?} and {:?} differ", self.dims, other.dims)));
        }
        track::note(self.data.len());
        Ok(Self { dims: self.dims.clone(), data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    /// Same buffer, new extents with the same total length.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(PclmError::dim(format!("cannot reshape {:?} into {:?}", self.dims, dims)));
        }
        Ok(Self { dims, data: self.data })
    }

    pub fn max_abs_diff(&self, other: &NdArray) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

impl From<DenseMatrix> for NdArray {
    fn from(m: DenseMatrix) -> Self {
        NdArray { dims: vec![m.rows, m.cols], data: m.data }
    }
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PclmError::dim(format!("matrix extents must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(PclmError::dim(format!("buffer of length {} does not match {rows}x{cols}", data.len())));
        }
        track::note(data.len());
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        track::note(rows * cols);
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    /// Build from row slices; convenient for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(PclmError::dim("ragged rows"));
        }
        if r == 0 || c == 0 {
            return Err(PclmError::dim("empty matrix"));
        }
        Ok(Self::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef { rows: self.rows, cols: self.cols, data: &self.data, row_stride: 1, col_stride: self.rows as isize }
    }

    /// Transposed view without copying.
    pub fn t(&self) -> MatRef<'_> {
        self.view().t()
    }

    pub fn transpose(&self) -> DenseMatrix {
        self.t().to_owned()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.view().matmul(other.view())
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(PclmError::dim(format!(
                "matrix with {} columns applied to vector of length {}",
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.column(j)) {
                    *o += a * vj;
                }
            }
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
        let (r1, c1, r2, c2) = (self.rows, self.cols, other.rows, other.cols);
        let mut out = DenseMatrix::zeros(r1 * r2, c1 * c2);
        for j1 in 0..c1 {
            for j2 in 0..c2 {
                let col = j1 * c2 + j2;
                for i1 in 0..r1 {
                    let a = self[(i1, j1)];
                    if a == 0.0 {
                        continue;
                    }
                    let base = col * out.rows + i1 * r2;
                    for i2 in 0..r2 {
                        out.data[base + i2] = a * other[(i2, j2)];
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PclmError::dim(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        DenseMatrix::new(self.rows, self.cols, data)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        let data = self.data.iter().map(|v| v * s).collect();
        track::note(self.data.len());
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        max_abs_diff(&self.data, &other.data)
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.cols.min(self.rows) {
            for i in 0..j {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

/// Borrowed strided matrix, used to pass transposes to the kernels without copying.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn t(self) -> MatRef<'a> {
        MatRef {
            rows: self.cols,
            cols: self.rows,
            data: self.data,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i as isize * self.row_stride + j as isize * self.col_stride) as usize]
    }

    pub fn to_owned(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub(crate) fn raw(&self) -> (&'a [f64], isize, isize) {
        (self.data, self.row_stride, self.col_stride)
    }

    pub fn matmul(&self, other: MatRef<'_>) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(PclmError::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        let (a, rsa, csa) = self.raw();
        let (b, rsb, csb) = other.raw();
        crate::linalg::gemm(
            self.rows,
            self.cols,
            other.cols,
            (a, rsa, csa),
            (b, rsb, csb),
            (&mut out.data, 1, self.rows as isize),
        );
        Ok(out)
    }
}

pub(crate) fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(PclmError::dim("an array needs at least one dimension"));
    }
    if let Some(k) = dims.iter().position(|&m| m == 0) {
        return Err(PclmError::dim(format!("extent of dimension {} is zero in {:?}", k + 1, dims)));
    }
    Ok(())
}

/// Odometer step over a first-index-fastest multi-index.
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) {
    for (i, &m) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < m {
            return;
        }
        *i = 0;
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_first_index_fastest() {
        let a = NdArray::from_fn(vec![2, 3, 4], |i| (i[0] + 10 * i[1] + 100 * i[2]) as f64).unwrap();
        assert_eq!(a.data()[0], 0.0);
        assert_eq!(a.data()[1], 1.0);
        assert_eq!(a.data()[2], 10.0);
        assert_eq!(a.data()[6], 100.0);
        assert_eq!(a.get(&[1, 2, 3]), 321.0);
    }

    #[test]
    fn length_must_match_extents() {
        assert!(NdArray::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(NdArray::new(vec![2, 0], vec![]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn matrix_flattening_is_column_stacking() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.data(), &[1.0, 3.0, 2.0, 4.0]);
        let a: NdArray = m.into();
        assert_eq!(a.get(&[0, 1]), 2.0);
    }

    #[test]
    fn kron_matches_definition() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[0.0, 5.0], &[6.0, 7.0], &[1.0, -1.0]]).unwrap();
        let k = a.kron(&b);
        assert_eq!((k.rows(), k.cols()), (6, 4));
        for i1 in 0..2 {
            for j1 in 0..2 {
                for i2 in 0..3 {
                    for j2 in 0..2 {
                        assert_eq!(k[(i1 * 3 + i2, j1 * 2 + j2)], a[(i1, j1)] * b[(i2, j2)]);
                    }
                }
            }
        }
    }

    #[test]
    fn matmul_with_transposed_views() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let ata = a.t().matmul(a.view()).unwrap();
        assert_eq!(ata[(0, 0)], 17.0);
        assert_eq!(ata[(1, 2)], 2.0 * 3.0 + 5.0 * 6.0);
        assert_eq!(ata.asymmetry(), 0.0);
    }
}
