//! Sparse approximate inverse preconditioner.
//!
//! Column `j` of `P` minimizes `||M p_j - e_j||_2` over vectors supported on
//! the sparsity pattern of row `j` of `M`. Each column is a small dense least
//! squares problem solved by QR. The result is symmetrized so CG can use it
//! directly.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::sparse::CsrMatrix;

/// Builds the SPAI preconditioner of `m` on the pattern of `m`.
///
/// A column whose local system is rank deficient falls back to the Jacobi
/// entry `1 / m_jj`.
pub fn spai_preconditioner(m: &CsrMatrix) -> Result<CsrMatrix> {
    let n = m.n();
    if n == 0 {
        return Err(invalid("empty matrix"));
    }
    let mt = m.transpose();
    let mut triplets = Vec::new();
    for j in 0..n {
        let pattern: Vec<usize> = mt.row(j).map(|(k, _)| k).collect();
        // Rows touched by the columns in the pattern.
        let rows: Vec<usize> = pattern
            .iter()
            .flat_map(|&k| mt.row(k).map(|(i, _)| i))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut local = DMatrix::zeros(rows.len(), pattern.len());
        for (c, &k) in pattern.iter().enumerate() {
            for (r, &i) in rows.iter().enumerate() {
                local[(r, c)] = m.get(i, k);
            }
        }
        let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&i| if i == j { 1.0 } else { 0.0 }));
        match solve_least_squares(local, rhs) {
            Some(col) => {
                for (c, &k) in pattern.iter().enumerate() {
                    triplets.push((k, j, col[c]));
                }
            }
            None => {
                let d = m.get(j, j);
                if d == 0.0 {
                    return Err(invalid(format!("zero diagonal at row {j}")));
                }
                triplets.push((j, j, 1.0 / d));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, triplets).symmetrized())
}

fn solve_least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    if a.ncols() == 0 || a.nrows() < a.ncols() {
        return None;
    }
    let scale = a.amax();
    let qr = a.qr();
    let r = qr.r();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-13 * scale) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
}
