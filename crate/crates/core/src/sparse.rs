//! Row-compressed sparse matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{invalid, FemError, Result};

/// Square sparse matrix in CSR form with column indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        Self::from_rows(rows.into_iter().map(|r| r.into_iter().collect()).collect())
    }

    /// Builds from per-row `(col, value)` lists, which must be sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, v) in row {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_rows(d.iter().enumerate().map(|(i, v)| vec![(i, *v)]).collect())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        Self::from_rows(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect())
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Sparsity `s`: the maximum number of stored entries in a row.
    pub fn max_row_nnz(&self) -> usize {
        (0..self.n).map(|i| self.row_len(i)).max().unwrap_or(0)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`, accumulated row by row in column order.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let rows = (0..self.n)
            .map(|i| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for (k, a) in self.row(i) {
                    for (j, b) in other.row(k) {
                        *acc.entry(j).or_insert(0.0) += a * b;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let t = self.transpose();
        Self::from_triplets(
            self.n,
            self.triplets().map(|(i, j, v)| (i, j, 0.5 * v)).chain(t.triplets().map(|(i, j, v)| (i, j, 0.5 * v))),
        )
    }

    /// Entry `(i, j)` stored iff `(j, i)` is, with values equal to `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets().all(|(i, j, v)| {
            let (a, b) = (self.row_ptr[j], self.row_ptr[j + 1]);
            match self.cols[a..b].binary_search(&i) {
                Ok(k) => (self.vals[a + k] - v).abs() <= tol,
                Err(_) => false,
            }
        })
    }

    /// `max_ij |A_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Matrix Market coordinate format (general, 1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        s
    }

    pub fn from_matrix_market(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| invalid("empty Matrix Market input"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| invalid(format!("bad size line: {header}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != dims[1] {
            return Err(invalid(format!("expected square size line, got: {header}")));
        }
        let n = dims[0];
        let mut triplets = Vec::with_capacity(dims[2]);
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(invalid(format!("bad entry line: {line}")));
            }
            let parse_idx = |s: &str| -> Result<usize> {
                let i: usize = s.parse().map_err(|_| invalid(format!("bad index in: {line}")))?;
                if i == 0 || i > n {
                    return Err(invalid(format!("index out of range in: {line}")));
                }
                Ok(i - 1)
            };
            let v: f64 = t[2].parse().map_err(|_| invalid(format!("bad value in: {line}")))?;
            triplets.push((parse_idx(t[0])?, parse_idx(t[1])?, v));
        }
        Ok(Self::from_triplets(n, triplets))
    }
}

/// Eigenvalues of a symmetric matrix in ascending order (dense; test-scale only).
pub fn dense_symmetric_eigenvalues(a: &CsrMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.to_dense().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `lambda_max / lambda_min` from a dense symmetric eigendecomposition.
pub fn dense_condition_number(a: &CsrMatrix) -> Result<f64> {
    let ev = dense_symmetric_eigenvalues(a);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo <= 0.0 {
        return Err(FemError::Singular(format!("smallest eigenvalue {lo:.3e}")));
    }
    Ok(hi / lo)
}

/// Dense solve `A x = b` by LU (test-scale oracle).
pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = a.to_dense().lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    lu.solve(&rhs)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| FemError::Singular("dense LU failed".into()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> CsrMatrix {
        CsrMatrix::from_triplets(3, [(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 1.0), (1, 1, 0.5)])
    }

    #[test]
    fn triplets_sum_and_sort() {
        let a = small();
        assert_eq!(a.get(1, 1), 2.5);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.max_row_nnz(), 2);
        assert!(a.is_symmetric(0.0));
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![1.0, 1.5, 1.0]);
    }

    #[test]
    fn asymmetric_pattern_detected() {
        let a = CsrMatrix::from_triplets(2, [(0, 1, 1.0)]);
        assert!(!a.is_symmetric(1e-12));
        assert!(a.symmetrized().is_symmetric(0.0));
    }

    #[test]
    fn matrix_market_roundtrip() {
        let a = small();
        let back = CsrMatrix::from_matrix_market(&a.to_matrix_market()).unwrap();
        assert_eq!(back, a);
        assert!(CsrMatrix::from_matrix_market("3 3 1\n4 1 1.0\n").is_err());
    }

    proptest! {
        #[test]
        fn product_matches_dense(entries in proptest::collection::vec((0usize..5, 0usize..5, -3.0f64..3.0), 0..20),
                                 others in proptest::collection::vec((0usize..5, 0usize..5, -3.0f64..3.0), 0..20)) {
            let a = CsrMatrix::from_triplets(5, entries);
            let b = CsrMatrix::from_triplets(5, others);
            let dense = a.to_dense() * b.to_dense();
            let prod = a.mul(&b).to_dense();
            prop_assert!((dense - prod).abs().max() < 1e-12);
        }
    }
}
