//! Dense real matrix and vector arithmetic: the small kernel everything
//! else builds on. Row-major storage, naive loops; the systems handled
//! here stay well below the sizes where a BLAS would pay off.
//!
//! Definiteness questions are answered through Cholesky factorizations
//! with an explicit margin instead of eigendecompositions: the callers
//! only ever need a yes/no, and the factorization doubles as the solver.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Checked constructor: length must match and every entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} entries", rows * cols),
                format!("{}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Matrix::from_vec".into(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("Matrix::from_rows", format!("{c} columns"), "ragged rows".to_string()));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix<T> {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for j in 0..other.cols {
                    dst[j] = dst[j] + a * orow[j];
                }
            }
        }
        out
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec: length mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// `selfᵀ * v` without forming the transpose.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec: length mismatch");
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == T::zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + *a * vi;
            }
        }
        out
    }

    /// `self += s · a bᵀ` — the rank-one accumulation used by backprop.
    pub fn add_outer(&mut self, a: &[T], b: &[T], s: T) {
        assert_eq!(self.rows, a.len());
        assert_eq!(self.cols, b.len());
        for i in 0..self.rows {
            let f = s * a[i];
            if f == T::zero() {
                continue;
            }
            for (dst, bj) in self.row_mut(i).iter_mut().zip(b) {
                *dst = *dst + f * *bj;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Matrix<T>, s: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d = *d + s * *o;
        }
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| *v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| acc + *v * *v)
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts the scalar type entrywise.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

/// Symmetric matrix with only the lower triangle stored, so symmetry is
/// structural rather than a runtime property.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix<T> {
    dim: usize,
    /// Row-major lower triangle including the diagonal:
    /// entry (i, j) with j ≤ i lives at `i(i+1)/2 + j`.
    lower: Vec<T>,
}

impl<T: Scalar> SymmetricMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        SymmetricMatrix {
            dim,
            lower: vec![T::zero(); dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymmetricMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = SymmetricMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from a full matrix, averaging the two triangles.
    pub fn from_full(m: &Matrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::shape(
                "SymmetricMatrix::from_full",
                "square matrix".to_string(),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        let half = crate::scalar::lit::<T>(0.5);
        Ok(SymmetricMatrix::from_fn(m.rows(), |i, j| {
            (m.get(i, j) + m.get(j, i)) * half
        }))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        r * (r + 1) / 2 + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.lower[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.lower[k] = v;
    }

    pub fn add_assign(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.lower[k] = self.lower[k] + v;
    }

    pub fn to_full(&self) -> Matrix<T> {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// `-self - margin·I`, the matrix whose positive definiteness encodes
    /// "self is negative definite with the given margin".
    pub fn negated_with_margin(&self, margin: T) -> SymmetricMatrix<T> {
        let mut out = SymmetricMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                let mut v = -self.get(i, j);
                if i == j {
                    v = v - margin;
                }
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.to_full().frobenius_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite())
    }
}

/// Lower-triangular Cholesky factor; kept as its own type so solves can
/// reuse the factorization.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    l: Matrix<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    pub fn lower(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.l.get(i, j) * y[j];
            }
            y[i] = s / self.l.get(i, i);
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.l.get(j, i) * y[j];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }

    pub fn solve_matrix(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        if rhs.rows() != self.dim() {
            return Err(Error::shape(
                "CholeskyFactor::solve_matrix",
                format!("{} rows", self.dim()),
                format!("{}", rhs.rows()),
            ));
        }
        let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
        let mut col = vec![T::zero(); rhs.rows()];
        for j in 0..rhs.cols() {
            for i in 0..rhs.rows() {
                col[i] = rhs.get(i, j);
            }
            let x = self.solve_vec(&col);
            for i in 0..rhs.rows() {
                out.set(i, j, x[i]);
            }
        }
        Ok(out)
    }

    /// log det(L Lᵀ) = Σ log(L_ii²)
    pub fn log_det(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.dim() {
            let d = self.l.get(i, i);
            acc = acc + (d * d).ln();
        }
        acc
    }
}

/// Cholesky factorization of a symmetric matrix. Succeeds iff the matrix
/// is positive definite; failure carries the first non-positive pivot.
pub fn cholesky<T: Scalar>(m: &SymmetricMatrix<T>) -> Result<CholeskyFactor<T>> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s = s - l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(CholeskyFactor { l })
}

/// True iff `-m - margin·I` is positive definite, i.e. every eigenvalue of
/// `m` lies below `-margin`.
pub fn is_negative_definite<T: Scalar>(m: &SymmetricMatrix<T>, margin: T) -> Result<bool> {
    if m.dim() == 0 {
        return Err(Error::EmptyMatrix);
    }
    match cholesky(&m.negated_with_margin(margin)) {
        Ok(_) => Ok(true),
        Err(Error::NotPositiveDefinite { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Default definiteness margin, scaled by dimension.
pub fn default_margin<T: Scalar>(dim: usize) -> T {
    crate::scalar::lit::<T>(1e-9) * T::from_usize(dim).unwrap()
}

/// Log determinant of a positive definite matrix.
pub fn log_det<T: Scalar>(m: &SymmetricMatrix<T>) -> Result<T> {
    Ok(cholesky(m)?.log_det())
}

/// Solves `m · S = rhs` for positive definite `m`.
pub fn solve_spd<T: Scalar>(m: &SymmetricMatrix<T>, rhs: &Matrix<T>) -> Result<Matrix<T>> {
    cholesky(m)?.solve_matrix(rhs)
}

/// Inverse of a positive definite matrix.
pub fn inv_spd<T: Scalar>(m: &SymmetricMatrix<T>) -> Result<Matrix<T>> {
    solve_spd(m, &Matrix::identity(m.dim()))
}

/// LU factorization with partial pivoting, for square systems that are
/// invertible but not necessarily definite.
#[derive(Debug, Clone)]
pub struct LuFactor<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> LuFactor<T> {
    pub fn new(m: &Matrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::shape(
                "LuFactor::new",
                "square matrix".to_string(),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        let n = m.rows();
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in k + 1..n {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    let a = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, a);
                }
                perm.swap(k, p);
            }
            let piv = lu.get(k, k);
            for i in k + 1..n {
                let f = lu.get(i, k) / piv;
                lu.set(i, k, f);
                if f == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu.get(i, j) - f * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Ok(LuFactor { lu, perm })
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu.get(i, j) * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.lu.get(i, j) * y[j];
            }
            y[i] = s / self.lu.get(i, i);
        }
        y
    }

    pub fn solve_matrix(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        if rhs.rows() != self.lu.rows() {
            return Err(Error::shape(
                "LuFactor::solve_matrix",
                format!("{} rows", self.lu.rows()),
                format!("{}", rhs.rows()),
            ));
        }
        let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
        let mut col = vec![T::zero(); rhs.rows()];
        for j in 0..rhs.cols() {
            for i in 0..rhs.rows() {
                col[i] = rhs.get(i, j);
            }
            let x = self.solve_vec(&col);
            for i in 0..rhs.rows() {
                out.set(i, j, x[i]);
            }
        }
        Ok(out)
    }
}

/// Squared Euclidean norm of a vector.
pub fn norm_sq<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + *x * *x)
}

/// Dot product.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}
