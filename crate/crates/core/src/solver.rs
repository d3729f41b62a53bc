//! Conjugate gradient with an energy-norm stopping rule, and extremal
//! eigenvalue estimation by power / inverse power iteration.
//!
//! CG only observes residuals. The energy error satisfies
//! `||x - x*||_M^2 = r^T M^{-1} r <= (r^T z) / lambda_min(PM)` for an SPD
//! preconditioner `P` with `z = P r` (`P = I` without preconditioning), so the
//! solver stops once that bound falls below `tol * ||x*||_M`. The unknown
//! `||x*||_M` is replaced by `sqrt(b^T x_k)`, which increases monotonically to
//! it from below. `lambda_min(PM)` is either supplied or taken from the
//! smallest Ritz value of the Lanczos tridiagonal built from the CG
//! coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FemError, Result};
use crate::sparse::{dot, norm, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgMethod {
    Plain,
    Preconditioned,
    /// CG on `(PM)^T (PM) x = (PM)^T P b`; used when `P` is not SPD.
    NormalEquations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub final_energy_error_estimate: f64,
    pub matvec_count: usize,
    pub converged: bool,
    pub method: CgMethod,
    /// Iterates `x_0, x_1, ...` when requested through [`CgConfig::record_iterates`].
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub iterates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgConfig {
    /// Relative energy-norm tolerance.
    pub tol: f64,
    /// Iteration cap; `None` uses `10 sqrt(kappa) ln(1/tol)` with an estimated `kappa`.
    pub cap: Option<usize>,
    /// Known lower bound on the spectrum of the (preconditioned) operator.
    pub lambda_min: Option<f64>,
    pub record_iterates: bool,
}

impl CgConfig {
    pub fn new(tol: f64) -> Self {
        Self { tol, cap: None, lambda_min: None, record_iterates: false }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = Some(cap);
        self
    }
}

/// Solves `M x = b` to relative energy-norm accuracy `tol`.
///
/// Returns [`FemError::NotConverged`] carrying the last iterate when the cap is
/// reached first.
pub fn conjugate_gradient(
    m: &CsrMatrix,
    b: &[f64],
    tol: f64,
    precond: Option<&CsrMatrix>,
    cap: Option<usize>,
) -> Result<CgReport> {
    conjugate_gradient_with(m, b, precond, &CgConfig { cap, ..CgConfig::new(tol) })
}

pub fn conjugate_gradient_with(
    m: &CsrMatrix,
    b: &[f64],
    precond: Option<&CsrMatrix>,
    config: &CgConfig,
) -> Result<CgReport> {
    if b.len() != m.n() {
        return Err(invalid(format!("rhs length {} does not match matrix size {}", b.len(), m.n())));
    }
    if !(config.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if let Some(p) = precond {
        if p.n() != m.n() {
            return Err(invalid("preconditioner size does not match matrix"));
        }
    }
    let cap = match config.cap {
        Some(c) => c,
        None => default_cap(m, config.tol)?,
    };

    let spd_candidate = precond.is_none_or(|p| p.is_symmetric(1e-12 * p.max_abs()));
    if spd_candidate {
        match pcg(m, b, precond, config, cap) {
            Err(PcgFailure::Indefinite) => {}
            Err(PcgFailure::Error(e)) => return Err(e),
            Ok(report) => return finish(report),
        }
    }
    let p = precond.expect("plain CG never reports an indefinite preconditioner");
    finish(cgnr(m, b, p, config, cap)?)
}

fn finish(report: CgReport) -> Result<CgReport> {
    if report.converged {
        Ok(report)
    } else {
        Err(FemError::NotConverged(Box::new(report)))
    }
}

/// `10 sqrt(kappa) ln(1/tol)`, at least `n` so exact-arithmetic termination fits.
fn default_cap(m: &CsrMatrix, tol: f64) -> Result<usize> {
    let kappa = estimate_condition_number(m, 1e-2)?.kappa;
    let cap = 10.0 * kappa.sqrt() * (1.0 / tol).ln().max(1.0);
    Ok((cap.ceil() as usize).max(m.n()))
}

enum PcgFailure {
    Indefinite,
    Error(FemError),
}

fn pcg(
    m: &CsrMatrix,
    b: &[f64],
    precond: Option<&CsrMatrix>,
    config: &CgConfig,
    cap: usize,
) -> std::result::Result<CgReport, PcgFailure> {
    let n = m.n();
    let apply_p = |r: &[f64]| -> Vec<f64> { precond.map_or_else(|| r.to_vec(), |p| p.matvec(r)) };
    let method = if precond.is_some() { CgMethod::Preconditioned } else { CgMethod::Plain };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = apply_p(&r);
    let mut rz = dot(&r, &z);
    let mut iterates = Vec::new();
    if config.record_iterates {
        iterates.push(x.clone());
    }
    if norm(b) == 0.0 {
        return Ok(CgReport {
            solution: x,
            iterations: 0,
            final_energy_error_estimate: 0.0,
            matvec_count: 0,
            converged: true,
            method,
            iterates,
        });
    }
    if rz <= 0.0 {
        return Err(PcgFailure::Indefinite);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut lanczos = LanczosRitz::default();
    let mut prev: Option<(f64, f64)> = None; // (alpha, beta) of the previous step
    let mut matvecs = 0;
    let mut estimate = f64::INFINITY;

    for it in 1..=cap {
        m.matvec_into(&p, &mut ap);
        matvecs += 1;
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(PcgFailure::Error(FemError::Singular(format!(
                "p^T M p = {pap:.3e} at iteration {it}"
            ))));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = apply_p(&r);
        let rz_new = dot(&r, &z);
        if rz_new < 0.0 {
            return Err(PcgFailure::Indefinite);
        }
        let beta = rz_new / rz;
        lanczos.push(alpha, prev);
        prev = Some((alpha, beta));
        if config.record_iterates {
            iterates.push(x.clone());
        }

        let lam = config.lambda_min.unwrap_or_else(|| lanczos.min_ritz());
        let x_energy = dot(b, &x).max(0.0).sqrt();
        estimate = (rz_new.max(0.0) / lam).sqrt();
        if estimate <= config.tol * x_energy || rz_new == 0.0 {
            return Ok(CgReport {
                solution: x,
                iterations: it,
                final_energy_error_estimate: estimate,
                matvec_count: matvecs,
                converged: true,
                method,
                iterates,
            });
        }
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Ok(CgReport {
        solution: x,
        iterations: cap,
        final_energy_error_estimate: estimate,
        matvec_count: matvecs,
        converged: false,
        method,
        iterates,
    })
}

/// CG on the normal equations of `PM x = P b`. The energy error of `M` is
/// bounded with the true residual: `||x - x*||_M <= ||b - M x|| / sqrt(lambda_min(M))`.
fn cgnr(m: &CsrMatrix, b: &[f64], p: &CsrMatrix, config: &CgConfig, cap: usize) -> Result<CgReport> {
    let n = m.n();
    let lam_m = match config.lambda_min {
        Some(l) => l,
        None => inverse_power_iteration(m, 1e-3, 10_000)?.0,
    };
    let pt = p.transpose();
    let apply_a = |v: &[f64]| p.matvec(&m.matvec(v));
    let apply_at = |v: &[f64]| m.matvec(&pt.matvec(v));
    let mut x = vec![0.0; n];
    let mut s = apply_at(&p.matvec(b));
    let mut d = s.clone();
    let mut ss = dot(&s, &s);
    let mut iterates = Vec::new();
    if config.record_iterates {
        iterates.push(x.clone());
    }
    let mut matvecs = 0;
    let mut estimate = f64::INFINITY;
    for it in 1..=cap {
        let ad = apply_a(&d);
        matvecs += 2;
        let alpha = ss / dot(&ad, &ad);
        for i in 0..n {
            x[i] += alpha * d[i];
        }
        let r_true: Vec<f64> = m.matvec(&x).iter().zip(b).map(|(mx, bi)| bi - mx).collect();
        s = apply_at(&p.matvec(&r_true));
        matvecs += 2;
        if config.record_iterates {
            iterates.push(x.clone());
        }
        estimate = norm(&r_true) / lam_m.sqrt();
        if estimate <= config.tol * dot(b, &x).max(0.0).sqrt() {
            return Ok(CgReport {
                solution: x,
                iterations: it,
                final_energy_error_estimate: estimate,
                matvec_count: matvecs,
                converged: true,
                method: CgMethod::NormalEquations,
                iterates,
            });
        }
        let ss_new = dot(&s, &s);
        let beta = ss_new / ss;
        for i in 0..n {
            d[i] = s[i] + beta * d[i];
        }
        ss = ss_new;
    }
    Ok(CgReport {
        solution: x,
        iterations: cap,
        final_energy_error_estimate: estimate,
        matvec_count: matvecs,
        converged: false,
        method: CgMethod::NormalEquations,
        iterates,
    })
}

/// Lanczos tridiagonal assembled from CG step sizes:
/// `T_jj = 1/alpha_j + beta_{j-1}/alpha_{j-1}`, `T_{j,j+1} = sqrt(beta_j)/alpha_j`.
#[derive(Default)]
struct LanczosRitz {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl LanczosRitz {
    fn push(&mut self, alpha: f64, prev: Option<(f64, f64)>) {
        match prev {
            None => self.diag.push(1.0 / alpha),
            Some((a_prev, b_prev)) => {
                self.diag.push(1.0 / alpha + b_prev / a_prev);
                self.off.push(b_prev.sqrt() / a_prev);
            }
        }
    }

    /// Smallest eigenvalue by Sturm-sequence bisection.
    fn min_ritz(&self) -> f64 {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = self.off.get(i).map_or(0.0, |v| v.abs()) + if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        lo = lo.max(0.0);
        let count_below = |x: f64| {
            let mut c = 0;
            let mut q = 1.0;
            for i in 0..n {
                let off2 = if i > 0 { self.off[i - 1] * self.off[i - 1] } else { 0.0 };
                q = self.diag[i] - x - if i > 0 { off2 / q } else { 0.0 };
                if q == 0.0 {
                    q = f64::MIN_POSITIVE;
                }
                if q < 0.0 {
                    c += 1;
                }
            }
            c
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi.abs() {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub kappa: f64,
}

const EIGEN_CAP: usize = 2_000_000;

/// Estimates `kappa = lambda_max / lambda_min` of an SPD matrix. Each
/// eigenvalue is iterated until the eigen-residual `||M v - theta v||` falls
/// below `tol * theta`.
pub fn estimate_condition_number(m: &CsrMatrix, tol: f64) -> Result<ConditionEstimate> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let (lambda_max, ok_max) = power_iteration(m, tol, EIGEN_CAP);
    let (lambda_min, ok_min) = match inverse_power_iteration(m, tol, EIGEN_CAP) {
        Ok((l, ok)) => (l, ok),
        Err(FemError::NotConverged(_)) => (f64::NAN, false),
        Err(e) => return Err(e),
    };
    if !ok_max || !ok_min {
        return Err(FemError::EigenNotConverged { lambda_max, lambda_min });
    }
    if lambda_min <= 0.0 {
        return Err(FemError::Singular(format!("lambda_min estimate {lambda_min:.3e}")));
    }
    Ok(ConditionEstimate { lambda_max, lambda_min, kappa: lambda_max / lambda_min })
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Largest eigenvalue; returns `(theta, converged)`.
pub fn power_iteration(m: &CsrMatrix, tol: f64, cap: usize) -> (f64, bool) {
    let n = m.n();
    let mut v = start_vector(n);
    let mut w = vec![0.0; n];
    let mut theta = 0.0;
    for _ in 0..cap {
        m.matvec_into(&v, &mut w);
        theta = dot(&v, &w);
        let res: f64 = w.iter().zip(&v).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        if res <= tol * theta.abs() {
            return (theta, true);
        }
        let s = norm(&w);
        if s == 0.0 {
            return (0.0, true);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / s;
        }
    }
    (theta, false)
}

/// Smallest eigenvalue of an SPD matrix; inner solves by CG to a tight residual.
pub fn inverse_power_iteration(m: &CsrMatrix, tol: f64, cap: usize) -> Result<(f64, bool)> {
    let n = m.n();
    let mut v = start_vector(n);
    let inner_cap = 20 * n + 100;
    let mut theta = f64::NAN;
    for _ in 0..cap {
        let y = residual_cg(m, &v, 1e-12, inner_cap)?;
        let s = norm(&y);
        if s == 0.0 || !s.is_finite() {
            return Err(FemError::Singular("inverse iteration produced a zero vector".into()));
        }
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / s;
        }
        let mv = m.matvec(&v);
        theta = dot(&v, &mv);
        let res: f64 = mv.iter().zip(&v).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        if res <= tol * theta.abs() {
            return Ok((theta, true));
        }
    }
    Ok((theta, false))
}

/// Plain CG with a relative residual stopping rule (used for inner solves).
pub(crate) fn residual_cg(m: &CsrMatrix, b: &[f64], rel_tol: f64, cap: usize) -> Result<Vec<f64>> {
    let n = m.n();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * rel_tol * rr;
    let mut ap = vec![0.0; n];
    for it in 0..cap {
        if rr <= target {
            return Ok(x);
        }
        m.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(FemError::Singular(format!("p^T M p = {pap:.3e} at iteration {it}")));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    if rr <= target * 1e4 {
        // Rounding can stall the residual slightly above a 1e-12 target.
        return Ok(x);
    }
    Err(FemError::NotConverged(Box::new(CgReport {
        solution: x,
        iterations: cap,
        final_energy_error_estimate: f64::NAN,
        matvec_count: cap,
        converged: false,
        method: CgMethod::Plain,
        iterates: Vec::new(),
    })))
}
