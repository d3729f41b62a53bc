//! Behavioral stand-ins for the quantum linear-equations solver and for
//! non-unitary preparation of `P|psi>`, plus the functional state `|r>`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::statevector::Statevector;
use crate::assembly::assemble_load;
use crate::error::{invalid, FemError, Result};
use crate::mesh::{BasisSpec, Mesh};
use crate::poly::Field;
use crate::resources::{qle_cost, ResourceEstimate};
use crate::solver::{conjugate_gradient, estimate_condition_number};
use crate::sparse::{dense_solve, dense_symmetric_eigenvalues, dot, norm, CsrMatrix};

/// Largest system handled by dense factorizations; larger ones use CG and
/// iterative eigenvalue estimates.
pub const DENSE_LIMIT: usize = 512;

/// `M^{-1} b` to working precision.
pub(crate) fn reference_solve(m: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if m.n() <= DENSE_LIMIT {
        dense_solve(m, b)
    } else {
        Ok(conjugate_gradient(m, b, 1e-13, None, None)?.solution)
    }
}

/// `(lambda_min, lambda_max)` of a symmetric positive definite `M`.
pub(crate) fn spectrum_bounds(m: &CsrMatrix) -> Result<(f64, f64)> {
    if m.n() <= DENSE_LIMIT {
        let eig = dense_symmetric_eigenvalues(m);
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(0.0, f64::max);
        if !(lo > 0.0) {
            return Err(FemError::Singular(format!("smallest eigenvalue {lo} is not positive")));
        }
        Ok((lo, hi))
    } else {
        let est = estimate_condition_number(m, 1e-10)?;
        Ok((est.lambda_min, est.lambda_max))
    }
}

#[derive(Debug, Clone)]
pub struct QleOutput {
    pub state: Statevector,
    /// Modeled cost of this solver call.
    pub cost: ResourceEstimate,
}

fn check_system(m: &CsrMatrix, b: &Statevector) -> Result<()> {
    if m.n() != b.active() {
        return Err(invalid(format!("matrix of size {} against a state with {} active amplitudes", m.n(), b.active())));
    }
    Ok(())
}

/// Normalized `M^{-1} b` moved by exactly `eps_l` in l2 distance along a
/// seeded random direction orthogonal to the exact solution.
pub fn simulated_qle(m: &CsrMatrix, b: &Statevector, eps_l: f64, seed: u64) -> Result<QleOutput> {
    if !(0.0..1.0).contains(&eps_l) {
        return Err(invalid(format!("eps_L must lie in [0, 1), got {eps_l}")));
    }
    check_system(m, b)?;
    let x = reference_solve(m, b.active_amplitudes())?;
    let s = norm(&x);
    if !(s > 0.0) {
        return Err(FemError::ZeroNorm("solution of the linear system vanishes".into()));
    }
    let x: Vec<f64> = x.iter().map(|v| v / s).collect();
    let mut y = x.clone();
    if eps_l > 0.0 {
        if x.len() < 2 {
            return Err(invalid("a one-dimensional system has no orthogonal direction to perturb along"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = loop {
            let mut w: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
            let proj = dot(&w, &x);
            w.iter_mut().zip(&x).for_each(|(wi, xi)| *wi -= proj * xi);
            let wn = norm(&w);
            if wn > 1e-8 {
                break w.into_iter().map(|v| v / wn).collect::<Vec<_>>();
            }
        };
        // |y - x|^2 = (1 - c)^2 + s^2 = 2 - 2c for a unit y.
        let c = 1.0 - eps_l * eps_l / 2.0;
        let sn = (1.0 - c * c).sqrt();
        y.iter_mut().zip(&w).zip(&x).for_each(|((yi, wi), xi)| *yi = c * xi + sn * wi);
    }
    let mut amplitudes = vec![0.0; b.dim()];
    amplitudes[..y.len()].copy_from_slice(&y);
    let yn = norm(&amplitudes);
    amplitudes.iter_mut().for_each(|a| *a /= yn);
    let (lo, hi) = spectrum_bounds(m)?;
    let kappa = hi / lo;
    let cost = qle_cost(m.max_row_nnz(), kappa, eps_l.max(f64::EPSILON))?;
    Ok(QleOutput { state: Statevector::from_amplitudes(amplitudes, b.active())?, cost })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Propagation {
    /// `|| M^{-1}b / |M^{-1}b| - M^{-1}(b+e) / |M^{-1}(b+e)| ||`.
    pub distance: f64,
    /// `2 ||e|| kappa`.
    pub bound: f64,
}

/// Effect of an input error `e` on the normalized solution of `M x = b`.
pub fn input_error_propagation(m: &CsrMatrix, b: &Statevector, e: &[f64], kappa: f64) -> Result<Propagation> {
    check_system(m, b)?;
    if e.len() != m.n() {
        return Err(invalid(format!("perturbation has length {}, expected {}", e.len(), m.n())));
    }
    let bound = 2.0 * norm(e) * kappa;
    let x = reference_solve(m, b.active_amplitudes())?;
    let perturbed: Vec<f64> = b.active_amplitudes().iter().zip(e).map(|(bi, ei)| bi + ei).collect();
    let xe = reference_solve(m, &perturbed)?;
    let (nx, nxe) = (norm(&x), norm(&xe));
    if !(nxe > 0.0) {
        return Err(FemError::ZeroNorm("perturbed solution vanishes".into()));
    }
    let distance = x.iter().zip(&xe).map(|(a, b)| (a / nx - b / nxe).powi(2)).sum::<f64>().sqrt();
    Ok(Propagation { distance, bound })
}

#[derive(Debug, Clone)]
pub struct NonunitaryOutcome {
    /// `P psi / |P psi|` on success, `psi` otherwise.
    pub state: Statevector,
    pub success: bool,
    /// `|P psi|^2 / (s^2 |P|_max^2)`.
    pub probability: f64,
}

/// Heralded application of a sparse non-unitary `P`.
pub fn apply_sparse_nonunitary(p: &CsrMatrix, psi: &Statevector, seed: u64) -> Result<NonunitaryOutcome> {
    if p.n() != psi.active() {
        return Err(invalid(format!("operator of size {} on a state with {} active amplitudes", p.n(), psi.active())));
    }
    let max = p.max_abs();
    if max == 0.0 {
        return Err(invalid("operator is zero"));
    }
    let image = p.matvec(psi.active_amplitudes());
    let image_norm = norm(&image);
    let s = p.max_row_nnz() as f64;
    let probability = (image_norm * image_norm / (s * s * max * max)).min(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if image_norm == 0.0 || rng.gen::<f64>() >= probability {
        return Ok(NonunitaryOutcome { state: psi.clone(), success: false, probability });
    }
    let mut amplitudes = vec![0.0; psi.dim()];
    amplitudes.iter_mut().zip(&image).for_each(|(a, v)| *a = v / image_norm);
    Ok(NonunitaryOutcome {
        state: Statevector::from_amplitudes(amplitudes, psi.active())?,
        success: true,
        probability,
    })
}

/// `|r> ∝ sum_i <phi_i, r> |i>` and `alpha = (sum_i <phi_i, r>^2)^{1/2}`.
pub fn build_r_state(mesh: &Mesh, spec: &BasisSpec, r: &dyn Field) -> Result<(Statevector, f64)> {
    let load = assemble_load(mesh, spec, r)?;
    let alpha = load.norm();
    if alpha == 0.0 {
        return Err(FemError::ZeroNorm("r is orthogonal to every basis function".into()));
    }
    Ok((Statevector::from_vector(&load.values)?, alpha))
}
