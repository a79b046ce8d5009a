//! Small dense linear algebra: vectors, column-major matrices, Cholesky
//! solves and a shifted power iteration for the top eigenpair.
//!
//! Dimensions in this crate are the model dimension `p` (a handful up to a
//! few dozen) or the number of rows in a dataset, so everything here is
//! written for clarity and deterministic summation order rather than
//! blocking or SIMD.

use super::NumericsError;
use std::ops::Index;

/// Rows are accumulated in fixed-size blocks; block partial sums are then
/// combined with Neumaier compensation. The order never depends on thread
/// count.
const SUM_BLOCK: usize = 256;

/// A finite real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Wraps `entries`, rejecting NaN and infinities.
    pub fn new(entries: Vec<f64>) -> Result<Self, NumericsError> {
        if entries.iter().all(|v| v.is_finite()) {
            Ok(Self(entries))
        } else {
            Err(NumericsError::NonFinite)
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self(vec![value; len])
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "add_scaled: length mismatch");
        DenseVector(self.0.iter().zip(&other.0).map(|(a, b)| a + alpha * b).collect())
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, alpha: f64) -> DenseVector {
        DenseVector(self.0.iter().map(|v| alpha * v).collect())
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "distance: length mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = NumericsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

/// A finite real matrix stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major `data`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyDimension);
        }
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericsError> {
        let n = rows.len();
        if n == 0 {
            return Err(NumericsError::EmptyDimension);
        }
        let p = rows[0].as_ref().len();
        let mut data = vec![0.0; n * p];
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != p {
                return Err(NumericsError::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                data[j * n + i] = v;
            }
        }
        Self::from_col_major(n, p, data)
    }

    pub(crate) fn from_col_major_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> DenseVector {
        DenseVector((0..self.cols).map(|j| self.get(i, j)).collect())
    }

    /// Raw column-major storage.
    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start < end && end <= self.rows, "row_block out of range");
        let n = end - start;
        let mut data = Vec::with_capacity(n * self.cols);
        for j in 0..self.cols {
            data.extend_from_slice(&self.col(j)[start..end]);
        }
        DenseMatrix::from_col_major_unchecked(n, self.cols, data)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[&DenseMatrix]) -> Result<DenseMatrix, NumericsError> {
        let first = blocks.first().ok_or(NumericsError::EmptyDimension)?;
        let cols = first.cols;
        if let Some(bad) = blocks.iter().find(|b| b.cols != cols) {
            return Err(NumericsError::DimensionMismatch {
                expected: cols,
                found: bad.cols,
            });
        }
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for b in blocks {
                data.extend_from_slice(b.col(j));
            }
        }
        Ok(DenseMatrix::from_col_major_unchecked(rows, cols, data))
    }

    /// Matrix-vector product `A x`.
    pub fn mul_vec(&self, x: &DenseVector) -> DenseVector {
        DenseVector(self.mul_slice(x.as_slice()))
    }

    pub(crate) fn mul_slice(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec: dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.col(j)) {
                *o += xj * a;
            }
        }
        out
    }

    /// `Aᵀ w`, each entry summed in fixed blocks.
    pub fn transpose_mul_slice(&self, w: &[f64]) -> DenseVector {
        assert_eq!(self.rows, w.len(), "transpose_mul: dimension mismatch");
        DenseVector((0..self.cols).map(|j| dot(self.col(j), w)).collect())
    }

    /// `Aᵀ diag(w) A` (symmetric by construction).
    pub fn weighted_gram(&self, w: &[f64]) -> DenseMatrix {
        assert_eq!(self.rows, w.len(), "weighted_gram: dimension mismatch");
        let p = self.cols;
        let mut out = DenseMatrix::zeros(p, p);
        for j in 0..p {
            for k in j..p {
                let v = weighted_dot(w, self.col(j), self.col(k));
                out.set(j, k, v);
                out.set(k, j, v);
            }
        }
        out
    }

    /// General product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul: dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let col = self.mul_slice(other.col(j));
            out.data[j * self.rows..(j + 1) * self.rows].copy_from_slice(&col);
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix::from_col_major_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|v| alpha * v).collect(),
        )
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix::from_col_major_unchecked(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| self.col(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Symmetric up to `rel_tol` relative to the largest entry.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= rel_tol * scale))
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Sums `f(i)` for `i in 0..len` in fixed blocks with compensated block totals.
#[inline]
pub(crate) fn blocked_sum(len: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut total = CompensatedSum::default();
    let mut start = 0;
    while start < len {
        let end = (start + SUM_BLOCK).min(len);
        let mut acc = [0.0; 4];
        let mut i = start;
        while i + 4 <= end {
            acc[0] += f(i);
            acc[1] += f(i + 1);
            acc[2] += f(i + 2);
            acc[3] += f(i + 3);
            i += 4;
        }
        while i < end {
            acc[0] += f(i);
            i += 1;
        }
        total.add((acc[0] + acc[1]) + (acc[2] + acc[3]));
        start = end;
    }
    total.value()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    blocked_sum(a.len(), |i| a[i] * b[i])
}

#[inline]
pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    debug_assert!(w.len() == a.len() && a.len() == b.len());
    blocked_sum(w.len(), |i| w[i] * a[i] * b[i])
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: DenseMatrix,
}

impl Cholesky {
    /// Factors a symmetric positive-definite matrix. A pivot at or below
    /// `1e-12 * max(diag(A))` is reported as [`NumericsError::NotPositiveDefinite`].
    pub fn factor(a: &DenseMatrix) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if !a.is_symmetric(1e-10) {
            return Err(NumericsError::NotSymmetric);
        }
        let n = a.rows();
        let max_diag = (0..n).map(|i| a.get(i, i)).fold(f64::NEG_INFINITY, f64::max);
        let threshold = 1e-12 * max_diag.max(0.0);
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > threshold) || d <= 0.0 {
                return Err(NumericsError::NotPositiveDefinite { pivot: j });
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector, NumericsError> {
        let n = self.lower.rows();
        if b.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let l = &self.lower;
        let mut y = b.as_slice().to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.get(k, i) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        DenseVector::new(y)
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, NumericsError> {
    if a.rows() != b.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    Cholesky::factor(a)?.solve(b)
}

/// Top eigenpair of a symmetric matrix by power iteration on `S + cI`,
/// with `c = ‖S‖₁` so the shifted spectrum is nonnegative and the dominant
/// eigenvalue of the shifted matrix is the algebraically largest one of `S`.
///
/// Stops once `‖Sv − λv‖₂ ≤ tol·‖S‖_F`, `λ` being the Rayleigh quotient.
/// The returned vector has unit norm and its first nonzero entry positive.
pub fn leading_eigenpair(
    s: &DenseMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, DenseVector), NumericsError> {
    if !s.is_square() {
        return Err(NumericsError::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    if !s.is_symmetric(1e-10) {
        return Err(NumericsError::NotSymmetric);
    }
    if max_iter == 0 {
        return Err(NumericsError::Domain("max_iter must be at least 1".into()));
    }
    let n = s.rows();
    let frob = s.frobenius_norm();
    if frob == 0.0 {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        return Ok((0.0, DenseVector(e)));
    }
    let shift = s.norm_one();
    let threshold = tol * frob;

    // Fixed pseudo-random start: never exactly orthogonal to a structured
    // eigenvector such as e₁ or (1,−1)/√2.
    let mut state = 0x5DEE_CE66_D1CE_5EED_u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = super::rng::splitmix64(state);
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    normalize(&mut v);

    for _ in 0..max_iter {
        let sv = s.mul_slice(&v);
        let lambda: f64 = sv.iter().zip(&v).map(|(a, b)| a * b).sum();
        let resid = sv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= threshold {
            fix_sign(&mut v);
            return Ok((lambda, DenseVector(v)));
        }
        let mut next: Vec<f64> = sv.iter().zip(&v).map(|(a, b)| a + shift * b).collect();
        if normalize(&mut next) == 0.0 {
            // v lies in the null space of S + cI, i.e. λ = −c is the whole spectrum.
            fix_sign(&mut v);
            return Ok((lambda, DenseVector(v)));
        }
        v = next;
    }
    Err(NumericsError::NoConvergence { iterations: max_iter })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|x| *x != 0.0) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
