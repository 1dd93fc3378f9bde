//! Sparse Jacobians, their Gauss-Newton matrices and Cholesky solves.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("symbolic factorization failed: {0}")]
    Symbolic(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("numeric factorization failed: {0}")]
    Numeric(String),
}

/// Row-compressed sparsity pattern of a Jacobian. Columns inside a row keep
/// the order in which residual terms produce their derivatives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JacobianPattern {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl JacobianPattern {
    pub fn new(ncols: usize) -> Self {
        JacobianPattern {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cols: impl IntoIterator<Item = u32>) {
        self.cols.extend(cols);
        self.row_ptr.push(self.cols.len());
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// `out = J^T v`
    pub fn transpose_mul(&self, values: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate().take(self.nrows()) {
            if vi == 0.0 {
                continue;
            }
            for k in self.row_range(i) {
                out[self.cols[k] as usize] += values[k] * vi;
            }
        }
    }

    /// `out = J x`
    pub fn mul(&self, values: &[f64], x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows()) {
            *o = self
                .row_range(i)
                .map(|k| values[k] * x[self.cols[k] as usize])
                .sum();
        }
    }

    /// Transposed pattern and values; rows of the result are the columns
    /// of `self` in increasing row order.
    pub fn transpose(&self, values: &[f64]) -> (JacobianPattern, Vec<f64>) {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows() {
            for k in self.row_range(i) {
                let c = self.cols[k] as usize;
                cols[next[c]] = i as u32;
                vals[next[c]] = values[k];
                next[c] += 1;
            }
        }
        (
            JacobianPattern {
                ncols: self.nrows(),
                row_ptr: counts,
                cols,
            },
            vals,
        )
    }

    /// Squared norm of every row.
    pub fn row_norms_squared(&self, values: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| self.row_range(i).map(|k| values[k] * values[k]).sum())
            .collect()
    }
}

/// Upper triangle of `J^T J` in compressed columns, with a precomputed map
/// from Jacobian entry pairs to matrix slots and a reusable symbolic
/// Cholesky factorization.
#[derive(Debug, Clone)]
pub struct NormalMatrix {
    n: usize,
    col_ptr: Vec<u32>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
    diag: Vec<usize>,
    scatter: Vec<u32>,
    symbolic: SymbolicLlt<u32>,
}

impl NormalMatrix {
    pub fn new(pattern: &JacobianPattern) -> Result<Self, SparseError> {
        let n = pattern.ncols();
        let mut keys: Vec<u64> = Vec::with_capacity(pattern.nnz() * 4 + n);
        for c in 0..n as u64 {
            keys.push((c << 32) | c);
        }
        for i in 0..pattern.nrows() {
            let row = pattern.row(i);
            for (p, &a) in row.iter().enumerate() {
                for &b in &row[p..] {
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    keys.push(((hi as u64) << 32) | lo as u64);
                }
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let mut col_ptr = vec![0u32; n + 1];
        let mut row_idx = Vec::with_capacity(keys.len());
        for &k in &keys {
            col_ptr[(k >> 32) as usize + 1] += 1;
            row_idx.push((k & 0xffff_ffff) as u32);
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let find = |row: u32, col: u32| -> u32 {
            let (s, e) = (
                col_ptr[col as usize] as usize,
                col_ptr[col as usize + 1] as usize,
            );
            let off = row_idx[s..e].binary_search(&row).expect("entry in pattern");
            (s + off) as u32
        };
        let diag = (0..n as u32).map(|c| find(c, c) as usize).collect();
        let mut scatter = Vec::with_capacity(keys.len());
        for i in 0..pattern.nrows() {
            let row = pattern.row(i);
            for (p, &a) in row.iter().enumerate() {
                for &b in &row[p..] {
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    scatter.push(find(lo, hi));
                }
            }
        }
        let symbolic = {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
            SymbolicLlt::try_new(sym, Side::Upper)
                .map_err(|e| SparseError::Symbolic(format!("{e:?}")))?
        };
        let nnz = row_idx.len();
        Ok(NormalMatrix {
            n,
            col_ptr,
            row_idx,
            values: vec![0.0; nnz],
            diag,
            scatter,
            symbolic,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Accumulates `J^T J` for the given Jacobian values.
    pub fn assemble(&mut self, pattern: &JacobianPattern, jac: &[f64]) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        let mut s = 0usize;
        for i in 0..pattern.nrows() {
            let r = pattern.row_range(i);
            let vals = &jac[r];
            for p in 0..vals.len() {
                let a = vals[p];
                for &b in &vals[p..] {
                    self.values[self.scatter[s] as usize] += a * b;
                    s += 1;
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag.iter().map(|&k| self.values[k]).collect()
    }

    /// Full symmetric matrix, column-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for c in 0..n {
            for k in self.col_ptr[c] as usize..self.col_ptr[c + 1] as usize {
                let r = self.row_idx[k] as usize;
                d[c * n + r] = self.values[k];
                d[r * n + c] = self.values[k];
            }
        }
        d
    }

    /// `x^T A x` using the stored upper triangle.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.n {
            for k in self.col_ptr[c] as usize..self.col_ptr[c + 1] as usize {
                let r = self.row_idx[k] as usize;
                let v = self.values[k] * x[r] * x[c];
                acc += if r == c { v } else { 2.0 * v };
            }
        }
        acc
    }

    /// Cholesky factor of `A + diag(shift)`.
    pub fn factor_shifted(&self, shift: &[f64]) -> Result<Factor, SparseError> {
        let mut vals = self.values.clone();
        for (c, &k) in self.diag.iter().enumerate() {
            vals[k] += shift[c];
        }
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let mat = SparseColMatRef::new(sym, &vals);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Upper).map_err(
            |e| match e {
                faer::sparse::linalg::LltError::Numeric(
                    faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index },
                ) => SparseError::NotPositiveDefinite { pivot: index },
                other => SparseError::Numeric(format!("{other:?}")),
            },
        )?;
        Ok(Factor { llt })
    }

    /// Cholesky factor of `A + mu I`.
    pub fn factor_damped(&self, mu: f64) -> Result<Factor, SparseError> {
        self.factor_shifted(&vec![mu; self.n])
    }
}

pub struct Factor {
    llt: Llt<u32, f64>,
}

impl Factor {
    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let m = MatMut::from_column_major_slice_mut(rhs, n, 1);
        self.llt.solve_in_place(m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_matrix_matches_dense_product() {
        // J = [[1, 2, 0], [0, 3, 4], [5, 0, 6]] with columns given out of order in row 2
        let mut p = JacobianPattern::new(3);
        p.push_row([0, 1]);
        p.push_row([1, 2]);
        p.push_row([2, 0]);
        let jac = [1.0, 2.0, 3.0, 4.0, 6.0, 5.0];
        let mut a = NormalMatrix::new(&p).unwrap();
        a.assemble(&p, &jac);
        // J^T J = [[26, 2, 30], [2, 13, 12], [30, 12, 52]]
        assert_eq!(a.diagonal(), vec![26.0, 13.0, 52.0]);
        let x = [1.0, -1.0, 0.5];
        let dense = [[26.0, 2.0, 30.0], [2.0, 13.0, 12.0], [30.0, 12.0, 52.0]];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += x[i] * dense[i][j] * x[j];
            }
        }
        assert!((a.quadratic_form(&x) - q).abs() < 1e-12);

        let f = a.factor_damped(0.0).unwrap();
        let mut rhs = vec![1.0, 2.0, 3.0];
        f.solve(&mut rhs);
        for i in 0..3 {
            let back: f64 = (0..3).map(|j| dense[i][j] * rhs[j]).sum();
            assert!((back - [1.0, 2.0, 3.0][i]).abs() < 1e-10);
        }
        let mut jx = vec![0.0; 3];
        p.mul(&jac, &x, &mut jx);
        assert_eq!(jx, vec![-1.0, -1.0, 8.0]);
        let mut jtv = vec![0.0; 3];
        p.transpose_mul(&jac, &[1.0, 1.0, 1.0], &mut jtv);
        assert_eq!(jtv, vec![6.0, 5.0, 10.0]);
    }

    #[test]
    fn transpose_roundtrip() {
        let mut p = JacobianPattern::new(3);
        p.push_row([0, 1]);
        p.push_row([2, 0]);
        let (t, tv) = p.transpose(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.nrows(), 3);
        assert_eq!(t.ncols(), 2);
        assert_eq!(t.row(0), &[0, 1]);
        assert_eq!(tv, vec![1.0, 4.0, 2.0, 3.0]);
        let mut a = NormalMatrix::new(&t).unwrap();
        a.assemble(&t, &tv);
        // J J^T = [[5, 4], [4, 25]]
        assert_eq!(a.to_dense(), vec![5.0, 4.0, 4.0, 25.0]);
    }

    #[test]
    fn singular_matrix_needs_damping() {
        let mut p = JacobianPattern::new(2);
        p.push_row([0, 1]);
        let mut a = NormalMatrix::new(&p).unwrap();
        a.assemble(&p, &[1.0, 1.0]);
        assert!(a.factor_damped(1e-8).is_ok());
    }
}
