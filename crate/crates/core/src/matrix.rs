//! Small dense row-major matrix used throughout the crate.
//!
//! Skeleton graphs have at most a few dozen nodes and the analysis operators
//! stay below a few thousand rows, so everything is dense. Shape mismatches in
//! the arithmetic helpers are programming errors and panic; public operations
//! that accept user data validate shapes first and return [`crate::Error`].

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        out.add_matmul(self, other);
        out
    }

    /// `self += a · b`.
    pub fn add_matmul(&mut self, a: &Self, b: &Self) {
        assert_eq!(a.cols, b.rows, "matmul inner dimension");
        assert_eq!(self.shape(), (a.rows, b.cols), "matmul output shape");
        let n = b.cols;
        for i in 0..a.rows {
            let out = &mut self.data[i * n..(i + 1) * n];
            for (k, &aik) in a.row(i).iter().enumerate() {
                if aik == T::zero() {
                    continue;
                }
                for (o, &bkj) in out.iter_mut().zip(b.row(k)) {
                    *o += aik * bkj;
                }
            }
        }
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul inner dimension");
        let mut out = Self::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let brow = other.row(k);
            for (i, &aki) in self.row(k).iter().enumerate() {
                if aki == T::zero() {
                    continue;
                }
                let o = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in o.iter_mut().zip(brow) {
                    *o += aki * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_t inner dimension");
        Self::from_fn(self.rows, other.rows, |i, j| {
            self.row(i)
                .iter()
                .zip(other.row(j))
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
        })
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(T::one(), other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-T::one(), other);
        out
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|x| alpha * x)
    }

    pub fn scale_in_place(&mut self, alpha: T) {
        for x in &mut self.data {
            *x *= alpha;
        }
    }

    /// Multiplies column `j` by `d[j]`, i.e. `self · diag(d)`.
    pub fn scale_columns(&self, d: &[T]) -> Self {
        assert_eq!(self.cols, d.len(), "scale_columns dimension");
        let mut out = self.clone();
        for i in 0..self.rows {
            for (x, &s) in out.row_mut(i).iter_mut().zip(d) {
                *x *= s;
            }
        }
        out
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "hadamard shape");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// Induced ∞-norm: largest absolute row sum.
    pub fn inf_norm(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `‖self − other‖_F / max(‖other‖_F, tiny)`.
    pub fn rel_frobenius_diff(&self, other: &Self) -> T {
        let diff = self.sub(other).frobenius_norm();
        let denom = other.frobenius_norm();
        if denom > T::zero() {
            diff / denom
        } else {
            diff
        }
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Averages the matrix with its transpose so that the result is
    /// symmetric to the last bit.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let half = T::of(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = other.shape();
        let mut out = Self::zeros(self.rows * p, self.cols * q);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == T::zero() {
                    continue;
                }
                for r in 0..p {
                    for c in 0..q {
                        out[(i * p + r, j * q + c)] = a * other[(r, c)];
                    }
                }
            }
        }
        out
    }

    /// Column-stacking vectorization, the convention under which
    /// `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
    pub fn vectorize(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self[(i, j)]);
            }
        }
        v
    }

    /// Inverse of [`Matrix::vectorize`].
    pub fn unvectorize(rows: usize, cols: usize, v: &[T]) -> Self {
        assert_eq!(v.len(), rows * cols, "unvectorize length");
        Self::from_fn(rows, cols, |i, j| v[j * rows + i])
    }

    /// Solves `self · X = rhs` by LU factorization with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if !self.is_square() || self.rows != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot solve {}x{} system with {}x{} right-hand side",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = self.max_abs().max(T::min_positive_value());
        for col in 0..n {
            let (pivot, pmax) = (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= scale * T::epsilon() {
                return Err(Error::Singular { column: col });
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot * n + j);
                }
                for j in 0..b.cols {
                    b.data.swap(col * b.cols + j, pivot * b.cols + j);
                }
            }
            let p = a[(col, col)];
            for r in (col + 1)..n {
                let f = a[(r, col)] / p;
                if f == T::zero() {
                    continue;
                }
                a[(r, col)] = T::zero();
                for j in (col + 1)..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
                for j in 0..b.cols {
                    let v = b[(col, j)];
                    b[(r, j)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[(col, col)];
            for j in 0..b.cols {
                let mut s = b[(col, j)];
                for k in (col + 1)..n {
                    s -= a[(col, k)] * b[(k, j)];
                }
                b[(col, j)] = s / p;
            }
        }
        Ok(b)
    }

    /// Largest singular value estimated by power iteration on `selfᵀ·self`.
    ///
    /// Converges from below; callers needing a certified value should use
    /// [`crate::spectral::spectral_norm`].
    pub fn power_iteration_norm(&self, tol: T, max_iter: usize) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        let n = self.cols;
        // deterministic start with no special alignment to sparse structure
        let mut v: Vec<T> = (0..n).map(|i| T::one() + T::of(0.01 * (i % 7) as f64)).collect();
        let mut sigma = T::zero();
        for _ in 0..max_iter {
            let av = self.mul_vec(&v);
            let mut w = vec![T::zero(); n];
            for (i, &a) in av.iter().enumerate() {
                for (wj, &m) in w.iter_mut().zip(self.row(i)) {
                    *wj += m * a;
                }
            }
            let norm = w.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm == T::zero() {
                return T::zero();
            }
            let next = norm.sqrt();
            for (vj, wj) in v.iter_mut().zip(&w) {
                *vj = *wj / norm;
            }
            let done = (next - sigma).abs() <= tol * next;
            sigma = next;
            if done {
                break;
            }
        }
        sigma
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn matmul_variants_agree() {
        let a = M::from_rows(&[[1.0, 2.0, 0.0], [-1.0, 0.5, 3.0]]);
        let b = M::from_rows(&[[2.0, 1.0], [0.0, -1.0], [4.0, 0.25]]);
        let ab = a.matmul(&b);
        assert_eq!(ab, M::from_rows(&[[2.0, -1.0], [10.0, -0.75]]));
        assert_eq!(a.transpose().t_matmul(&b), ab);
        assert_eq!(a.matmul_t(&b.transpose()), ab);
    }

    #[test]
    fn kron_vectorization_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let a = M::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]]);
        let x = M::from_rows(&[[0.3, -0.7, 1.1], [2.0, 0.1, -0.4]]);
        let b = M::from_rows(&[[1.0, 0.0], [2.0, -3.0], [0.5, 1.5]]);
        let lhs = a.matmul(&x).matmul(&b).vectorize();
        let rhs = b.transpose().kron(&a).mul_vec(&x.vectorize());
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-12);
        }
        let round = M::unvectorize(2, 3, &x.vectorize());
        assert_eq!(round, x);
    }

    #[test]
    fn solve_recovers_solution() {
        let a = M::from_rows(&[[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]]);
        let x = M::from_rows(&[[1.0, -2.0], [0.5, 0.0], [2.0, 1.0]]);
        let b = a.matmul(&x);
        let got = a.solve(&b).unwrap();
        assert!(got.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = M::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(a.solve(&M::identity(2)), Err(Error::Singular { .. })));
    }

    #[test]
    fn norms() {
        let a = M::from_rows(&[[1.0, -2.0], [0.5, 0.5]]);
        assert_eq!(a.inf_norm(), 3.0);
        assert_eq!(a.max_abs(), 2.0);
        let d = M::from_diag(&[3.0, -4.0]);
        assert!((d.power_iteration_norm(1e-14, 1000) - 4.0).abs() < 1e-10);
    }
}
