//! Small linear-algebra layer: a CSR matrix generic over real/complex
//! scalars, a dense partial-pivoting LU for the per-step transient systems,
//! and a sparse LU (faer) for the stacked harmonic-balance systems.

use std::fmt::Debug;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;
use num_traits::NumAssign;

/// Scalar types stored in [`SparseMatrix`].
pub trait Scalar: Copy + NumAssign + Debug + Send + Sync + 'static {
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Compressed sparse row matrix with sorted column indices and no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    /// Entries that sum to exactly zero are kept so the pattern stays stable.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => T::zero(),
        }
    }

    /// Iterates over stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (r, self.col_idx[p], self.values[p]))
        })
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[row]..self.row_ptr[row + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        self.iter().collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let mut acc = T::zero();
                for (c, v) in self.row(r) {
                    acc += v * x[c];
                }
                acc
            })
            .collect()
    }

    /// `y = A^H x` (conjugate transpose; plain transpose for real scalars).
    pub fn adjoint_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += v.conj() * x[r];
        }
        y
    }

    /// `y = A^T x` without conjugation.
    pub fn transpose_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += v * x[r];
        }
        y
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha * self + beta * other`, union of both patterns.
    pub fn add_scaled(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip: Vec<(usize, usize, T)> = self.iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        trip.extend(other.iter().map(|(r, c, v)| (r, c, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
        }
        d
    }

    /// True when every stored value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }
}

impl SparseMatrix<f64> {
    pub fn to_complex(&self) -> SparseMatrix<Complex64> {
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Failure modes of the factorizations below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorError {
    /// Zero pivot column (structurally or numerically singular).
    Singular { pivot: usize },
}

/// Dense LU with partial pivoting, row-major storage.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factors the row-major `n x n` matrix `a` in place.
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, FactorError> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(FactorError::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = f;
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Sparse LU (partial pivoting, fill-reducing ordering) of a real square matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &SparseMatrix<f64>) -> Result<Self, FactorError> {
        assert_eq!(a.nrows(), a.ncols());
        let trip: Vec<Triplet<usize, usize, f64>> =
            a.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows(), a.ncols(), &trip)
            .expect("triplets are in bounds");
        let lu = mat.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                FactorError::Singular { pivot: index }
            }
            faer::sparse::linalg::LuError::Generic(_) => FactorError::Singular { pivot: 0 },
        })?;
        Ok(Self { n: a.nrows(), lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A X = B` for a column-major block of right-hand sides.
    pub fn solve_many(&self, rhs: &mut [f64], ncols: usize) {
        self.solve_block(rhs, ncols, false);
    }

    /// Solves `A^T X = B` for a column-major block of right-hand sides.
    pub fn solve_transpose_many(&self, rhs: &mut [f64], ncols: usize) {
        self.solve_block(rhs, ncols, true);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_many(&mut x, 1);
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_transpose_many(&mut x, 1);
        x
    }

    fn solve_block(&self, rhs: &mut [f64], ncols: usize, transpose: bool) {
        let n = self.n;
        assert_eq!(rhs.len(), n * ncols);
        let mut m = Mat::<f64>::from_fn(n, ncols, |i, j| rhs[j * n + i]);
        if transpose {
            self.lu.solve_transpose_in_place(m.as_mut());
        } else {
            self.lu.solve_in_place(m.as_mut());
        }
        for j in 0..ncols {
            for i in 0..n {
                rhs[j * n + i] = m[(i, j)];
            }
        }
    }
}

pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.modulus().powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn dense_lu_solves_with_pivoting() {
        // first pivot is zero, forces a row swap
        let a = vec![0.0, 2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let lu = DenseLu::factor(3, a.clone()).unwrap();
        let x = lu.solve(&[3.0, 4.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [3.0, 4.0, 3.0][i]).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_lu_reports_singular() {
        let err = DenseLu::factor(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap_err();
        assert_eq!(err, FactorError::Singular { pivot: 1 });
    }

    #[test]
    fn sparse_lu_transpose_solve() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 2.0), (2, 2, 5.0)],
        );
        let lu = SparseLu::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve_transpose(&b);
        let back = a.transpose_mul_vec(&x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_adjoint_conjugates() {
        let a = SparseMatrix::from_triplets(1, 2, &[(0, 1, Complex64::new(0.0, 2.0))]);
        let y = a.adjoint_mul_vec(&[Complex64::new(1.0, 0.0)]);
        assert_eq!(y[1], Complex64::new(0.0, -2.0));
        assert_eq!(y[0], Complex64::new(0.0, 0.0));
    }
}
