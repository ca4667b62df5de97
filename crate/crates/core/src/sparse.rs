//! Compressed-row sparse matrices, sparse direct factorizations (backed by
//! `faer`) and a restarted GMRES.

use std::fmt::Write as _;

use faer::col::ColMut;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed row storage with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Sums duplicate entries. Triplets are `(row, col, value)`.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[cursor[r]] = c;
            vals[cursor[r]] = v;
            cursor[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_triplets(n_rows, n_cols, &[])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `y += alpha * A x`
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += alpha * self.row(r).map(|(c, v)| v * x[c]).sum::<f64>();
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t)
    }

    /// Submatrix on the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (k, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    t.push((k, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    /// Rows in the given order, all columns kept.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let all: Vec<usize> = (0..self.n_cols).collect();
        self.select(rows, &all)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let t: Vec<_> = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r, c, alpha * v)))
            .collect();
        Self::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji| / max |A_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let t = self.transpose();
        self.add_scaled(-1.0, &t).max_abs() / scale
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &t)
            .expect("CSR entries are in bounds")
    }

    /// MatrixMarket coordinate dump (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "%%MatrixMarket matrix coordinate real general");
        let _ = writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(out, "{} {} {:.16e}", r + 1, c + 1, v);
        }
        out
    }
}

fn solve_with<S: Solve<f64>>(solver: &S, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    solver.solve_in_place(ColMut::from_slice_mut(&mut x));
    x
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct CholeskyFactor {
    n: usize,
    llt: Llt<usize, f64>,
}

impl std::fmt::Debug for CholeskyFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CholeskyFactor").field("n", &self.n).finish()
    }
}

impl CholeskyFactor {
    pub fn new(matrix: &SparseMatrix) -> Result<Self> {
        let llt = matrix
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::LinearSolver(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Self {
            n: matrix.n_rows(),
            llt,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        solve_with(&self.llt, b)
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct LuFactor {
    n: usize,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor").field("n", &self.n).finish()
    }
}

impl LuFactor {
    pub fn new(matrix: &SparseMatrix) -> Result<Self> {
        if matrix.n_rows() != matrix.n_cols() {
            return Err(Error::LinearSolver("LU needs a square matrix".into()));
        }
        let lu = matrix
            .to_faer()
            .sp_lu()
            .map_err(|e| Error::LinearSolver(format!("LU factorization failed: {e:?}")))?;
        Ok(Self {
            n: matrix.n_rows(),
            lu,
        })
    }

    /// Solves and rejects non-finite results (singular pivots show up as
    /// infinities or NaNs).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let x = solve_with(&self.lu, b);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::LinearSolver("LU solve produced non-finite values".into()))
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Restarted, right-preconditioned GMRES for `A x = b`, starting from `x`.
///
/// `apply` computes `A v`, `precondition` computes `P^{-1} v`. Stops when the
/// true residual satisfies `|b - A x| <= rtol |b|`.
pub fn gmres<A, P>(
    apply: A,
    precondition: P,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<GmresReport>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
    P: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(GmresReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let ax = apply(x)?;
        Ok(b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect())
    };

    let mut iterations = 0;
    let mut r = residual(x)?;
    let mut beta = norm2(&r);
    while iterations < max_iterations {
        if beta <= rtol * b_norm {
            break;
        }
        let m = restart.min(max_iterations - iterations);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut precond: Vec<Vec<f64>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z = precondition(&basis[k])?;
            let mut w = apply(&z)?;
            precond.push(z);
            // Modified Gram-Schmidt, one reorthogonalization pass.
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let h = dot(&w, v);
                    hess[j][k] += h;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h * vi);
                }
            }
            let w_norm = norm2(&w);
            hess[k + 1][k] = w_norm;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::LinearSolver("GMRES breakdown".into()));
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= 0.1 * rtol * b_norm || w_norm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = ((i + 1)..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (yi, z) in y.iter().zip(&precond) {
            x.iter_mut().zip(z).for_each(|(xi, zi)| *xi += yi * zi);
        }
        r = residual(x)?;
        beta = norm2(&r);
    }
    debug_assert_eq!(r.len(), n);
    let relative_residual = beta / b_norm;
    Ok(GmresReport {
        iterations,
        relative_residual,
        converged: relative_residual <= rtol,
    })
}
