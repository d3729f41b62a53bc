//! Error-budget planning: Sobolev data, mesh-size selection and the split of
//! a target accuracy `eps * ||r||` between discretisation, norm estimation,
//! the linear solve and the final overlap measurement.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FemError, Result};
use crate::mesh::{BasisSpec, Mesh};
use crate::quadrature::{GaussRule, TriangleRule};

/// Sobolev norms of the exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevData {
    pub l2_norm: f64,
    /// `|u|_m` for `m = 0, 1, ...`; `|u|_0 = ||u||`.
    pub seminorms: Vec<f64>,
    /// `||u||_1 = |u|_0 + |u|_1`.
    pub sobolev_1_norm: f64,
}

impl SobolevData {
    pub fn new(seminorms: Vec<f64>) -> Result<Self> {
        if seminorms.len() < 2 {
            return Err(invalid("need at least |u|_0 and |u|_1"));
        }
        if seminorms.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!("seminorms must be finite and nonnegative: {seminorms:?}")));
        }
        Ok(Self { l2_norm: seminorms[0], sobolev_1_norm: seminorms[0] + seminorms[1], seminorms })
    }

    /// `|u|_m`, if known.
    pub fn seminorm(&self, m: usize) -> Option<f64> {
        self.seminorms.get(m).copied()
    }

    /// Re-derives the dependent fields; used after deserializing user input.
    pub fn validated(self) -> Result<Self> {
        let out = Self::new(self.seminorms)?;
        if (out.l2_norm - self.l2_norm).abs() > 1e-12 * out.l2_norm.max(1.0) {
            return Err(invalid("l2_norm must equal |u|_0"));
        }
        Ok(out)
    }
}

/// `h = C (eps / (2 |u|_{k+1}))^{1/(k+1)}`; the factor 2 asks for
/// `||u - u_h|| <= eps / 2`.
pub fn choose_mesh_size(eps: f64, seminorm_k1: f64, k: usize, calibration: f64) -> Result<f64> {
    if !(eps > 0.0) || !(seminorm_k1 > 0.0) || !(calibration > 0.0) || k == 0 {
        return Err(invalid(format!(
            "need eps, |u|_(k+1), C > 0 and k >= 1; got eps = {eps}, seminorm = {seminorm_k1}, C = {calibration}, k = {k}"
        )));
    }
    Ok(calibration * (eps / (2.0 * seminorm_k1)).powf(1.0 / (k + 1) as f64))
}

/// Uniform mesh realising a target mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshPlan {
    pub target_h: f64,
    /// Elements per side.
    pub n: usize,
    pub dofs: usize,
}

/// Smallest uniform mesh with `h <= target_h` (at least two elements per side),
/// rejected if its dof count exceeds `max_dofs`.
pub fn plan_mesh(target_h: f64, d: usize, k: usize, max_dofs: usize) -> Result<MeshPlan> {
    if !(target_h > 0.0) {
        return Err(invalid(format!("mesh size must be positive, got {target_h}")));
    }
    let n_f = match d {
        1 => (1.0 / target_h).ceil(),
        2 => (std::f64::consts::SQRT_2 / target_h).ceil(),
        _ => return Err(FemError::Unsupported(format!("assembled runs support d in {{1, 2}}, got {d}"))),
    }
    .max(2.0);
    let dofs_f = match d {
        1 => k as f64 * n_f,
        _ => (n_f - 1.0).powi(2),
    };
    if dofs_f > max_dofs as f64 {
        let required = if dofs_f >= usize::MAX as f64 { usize::MAX } else { dofs_f as usize };
        return Err(FemError::CapExceeded { required, cap: max_dofs });
    }
    Ok(MeshPlan { target_h, n: n_f as usize, dofs: dofs_f as usize })
}

/// Accuracy shares of a functional estimate with target `eps * ||r||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps: f64,
    /// Allowed `||u - u_h||`.
    pub eps_d: f64,
    /// Allowed additive error of the norm estimate.
    pub eps_n: f64,
    /// Relative version of `eps_n`.
    pub rel_norm_error: f64,
    /// Allowed l2 error of the solver output state.
    pub eps_l: f64,
    /// Allowed additive error of the overlap estimate.
    pub eps_out: f64,
    /// Relative energy-norm tolerance for the classical CG solve.
    pub eps_cg: f64,
    pub h: Option<f64>,
    pub dofs: Option<usize>,
}

/// Relative norm-estimation accuracy `eps / (3 ||u||)`.
pub fn relative_norm_share(eps: f64, u_norm: f64) -> f64 {
    eps / (3.0 * u_norm)
}

/// Discretisation share that closes the budget exactly:
/// `eps_d (1 + delta) + eps/3 + (1 + delta) eps/3 = eps` with `delta = eps / (3 ||u||)`.
pub fn discretisation_share(eps: f64, u_norm: f64) -> f64 {
    let delta = relative_norm_share(eps, u_norm);
    (eps - eps / 3.0 - (1.0 + delta) * eps / 3.0) / (1.0 + delta)
}

/// Splits `eps` so each term of the reconstruction error is at most
/// `eps ||r|| / 3`, and checks that the worst case closes.
pub fn split_budget(
    eps: f64,
    sobolev: &SobolevData,
    alpha: f64,
    u_tilde_norm: f64,
    r_norm: f64,
) -> Result<ErrorBudget> {
    for (name, v) in [("eps", eps), ("alpha", alpha), ("||u~||", u_tilde_norm), ("||r||", r_norm)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let u_norm = sobolev.l2_norm;
    if eps > u_norm {
        return Err(FemError::Unsupported(format!(
            "eps = {eps} exceeds ||u|| = {u_norm}; the budget split assumes eps <= ||u||"
        )));
    }
    let delta = relative_norm_share(eps, u_norm);
    let eps_lo = eps * r_norm / (6.0 * alpha * u_tilde_norm);
    let budget = ErrorBudget {
        eps,
        eps_d: discretisation_share(eps, u_norm),
        eps_n: delta * u_tilde_norm,
        rel_norm_error: delta,
        eps_l: eps_lo,
        eps_out: eps_lo,
        eps_cg: eps / (3.0 * sobolev.sobolev_1_norm.max(f64::MIN_POSITIVE)),
        h: None,
        dofs: None,
    };
    let bound = budget.worst_case_error(u_norm, u_tilde_norm, r_norm, alpha);
    if bound > eps * r_norm * (1.0 + 1e-12) {
        return Err(invalid(format!("budget does not close: bound {bound:.6e} > {:.6e}", eps * r_norm)));
    }
    Ok(budget)
}

impl ErrorBudget {
    /// Worst case of [`reconstruction_error`] over all admissible signed errors.
    pub fn worst_case_error(&self, u_norm: f64, u_tilde_norm: f64, r_norm: f64, alpha: f64) -> f64 {
        r_norm * self.eps_d * (1.0 + self.eps_n / u_tilde_norm)
            + u_norm * r_norm * self.eps_n / u_tilde_norm
            + alpha * (u_tilde_norm + self.eps_n) * (self.eps_l + self.eps_out)
    }

    /// Sampling-free limit: only the discretisation term remains.
    pub fn exact(&self) -> Self {
        Self { eps_n: 0.0, rel_norm_error: 0.0, eps_l: 0.0, eps_out: 0.0, ..self.clone() }
    }
}

/// Signed errors entering the reconstruction of `R` from its estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedErrors {
    /// `<u~ - u, r>`, bounded by `||r|| eps_d`.
    pub discretisation: f64,
    /// `N~ - ||u~||`.
    pub norm: f64,
    /// Overlap error caused by the solver output state.
    pub solver: f64,
    pub measurement: f64,
}

/// `alpha N~ R~ - R` for given signed errors and `<u, r>`.
pub fn reconstruction_error(errors: SignedErrors, u_dot_r: f64, u_tilde_norm: f64, alpha: f64) -> f64 {
    errors.discretisation * (1.0 + errors.norm / u_tilde_norm)
        + u_dot_r * errors.norm / u_tilde_norm
        + alpha * (u_tilde_norm + errors.norm) * (errors.solver + errors.measurement)
}

/// Seminorm `|v|_m` of the discrete function `sum_i coeffs_i phi_i`, computed
/// elementwise; `m` may not exceed the basis degree.
pub fn measure_sobolev(mesh: &Mesh, spec: &BasisSpec, coeffs: &[f64], order: usize) -> Result<f64> {
    spec.check_mesh(mesh)?;
    if coeffs.len() != spec.dof_count() {
        return Err(invalid(format!("{} coefficients for {} dofs", coeffs.len(), spec.dof_count())));
    }
    if order > spec.degree {
        return Err(invalid(format!(
            "order {order} exceeds basis degree {}; the discrete function has no weak derivative of that order",
            spec.degree
        )));
    }
    let coeff = |node: usize| spec.dof_of_node[node].map_or(0.0, |i| coeffs[i]) * spec.scale;
    let mut total = 0.0;
    match spec.dimension {
        1 => {
            let rule = GaussRule::exact_for(2 * spec.degree);
            let shapes: Vec<_> = spec.shapes_1d.iter().map(|s| s.nth_derivative(order)).collect();
            for e in 0..mesh.element_count() {
                let h = mesh.element_measure(e);
                let c: Vec<f64> = spec.element_nodes[e].iter().map(|&n| coeff(n)).collect();
                let scale = h.powi(-(order as i32));
                total += rule.integrate(0.0, 1.0, |t| {
                    let v: f64 = shapes.iter().zip(&c).map(|(s, ci)| ci * s.eval(t)).sum::<f64>() * scale;
                    v * v
                }) * h;
            }
        }
        _ => {
            let rule = TriangleRule::exact_for(2);
            for e in 0..mesh.element_count() {
                let c: Vec<f64> = spec.element_nodes[e].iter().map(|&n| coeff(n)).collect();
                let area = mesh.element_measure(e);
                if order == 0 {
                    let integral: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| {
                            let v = c[0] * (1.0 - p[0] - p[1]) + c[1] * p[0] + c[2] * p[1];
                            w * v * v
                        })
                        .sum();
                    total += integral * 2.0 * area;
                } else {
                    let g = crate::assembly::p1_gradients(mesh, e);
                    let gx: f64 = (0..3).map(|l| c[l] * g[l][0]).sum();
                    let gy: f64 = (0..3).map(|l| c[l] * g[l][1]).sum();
                    total += (gx * gx + gy * gy) * area;
                }
            }
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_gram;
    use crate::mesh::{build_interval_mesh, build_square_triangulation};
    use crate::sparse::dot;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mesh_size_examples() {
        assert_relative_eq!(choose_mesh_size(1e-4, 1.0, 1, 1.0).unwrap(), 5e-5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(choose_mesh_size(1.0, 1.0, 1, 1.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
        // (x/2)^{1/4} = sqrt((x/2)^{1/2}).
        let x: f64 = 3e-3;
        let h1 = choose_mesh_size(x, 1.0, 1, 1.0).unwrap();
        let h3 = choose_mesh_size(x, 1.0, 3, 1.0).unwrap();
        assert_relative_eq!(h3, h1.sqrt(), epsilon = 1e-14);
        assert!(choose_mesh_size(0.0, 1.0, 1, 1.0).is_err());
        assert!(choose_mesh_size(1.0, 0.0, 1, 1.0).is_err());
    }

    #[test]
    fn mesh_plan_clamps_and_caps() {
        let coarse = plan_mesh(10.0, 1, 1, 100).unwrap();
        assert_eq!(coarse.n, 2);
        let p = plan_mesh(0.01, 1, 2, 1000).unwrap();
        assert_eq!((p.n, p.dofs), (100, 200));
        let q = plan_mesh(std::f64::consts::SQRT_2 / 8.0, 2, 1, 1000).unwrap();
        assert_eq!((q.n, q.dofs), (8, 49));
        match plan_mesh(1e-6, 1, 1, 1000) {
            Err(FemError::CapExceeded { required, cap }) => assert_eq!((required, cap), (1_000_000, 1000)),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    fn unit() -> SobolevData {
        SobolevData::new(vec![1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn symmetric_unit_split() {
        let eps = 0.03;
        let b = split_budget(eps, &unit(), 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b.eps_n, eps / 3.0, epsilon = 1e-15);
        assert_relative_eq!(b.eps_l, eps / 6.0, epsilon = 1e-15);
        assert_relative_eq!(b.eps_out, eps / 6.0, epsilon = 1e-15);
        assert_relative_eq!(b.worst_case_error(1.0, 1.0, 1.0, 1.0), eps, epsilon = 1e-15);
        assert!(b.eps_d > 0.0 && b.eps_d <= eps / 2.0);
    }

    #[test]
    fn exact_limit_leaves_discretisation_only() {
        let b = split_budget(0.05, &unit(), 0.7, 2.0, 1.5).unwrap().exact();
        assert_relative_eq!(b.worst_case_error(1.0, 2.0, 1.5, 0.7), 1.5 * b.eps_d, epsilon = 1e-15);
    }

    #[test]
    fn eps_above_norm_is_unsupported() {
        assert!(matches!(split_budget(2.0, &unit(), 1.0, 1.0, 1.0), Err(FemError::Unsupported(_))));
    }

    #[test]
    fn random_instantiations_never_violate_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let u_norm: f64 = rng.gen_range(0.1..10.0);
            let sob = SobolevData::new(vec![u_norm, rng.gen_range(0.1..10.0)]).unwrap();
            let eps = rng.gen_range(1e-4..1.0) * u_norm;
            let alpha = rng.gen_range(1e-3..10.0);
            let u_tilde = rng.gen_range(0.1..100.0);
            let r_norm = rng.gen_range(0.1..10.0);
            let b = split_budget(eps, &sob, alpha, u_tilde, r_norm).unwrap();
            let mut pm = |bound: f64| rng.gen_range(-1.0..=1.0) * bound;
            let errors = SignedErrors {
                discretisation: pm(r_norm * b.eps_d),
                norm: pm(b.eps_n),
                solver: pm(b.eps_l),
                measurement: pm(b.eps_out),
            };
            let u_dot_r = pm(u_norm * r_norm);
            let err = reconstruction_error(errors, u_dot_r, u_tilde, alpha);
            assert!(err.abs() <= eps * r_norm * (1.0 + 1e-12), "{err} > {}", eps * r_norm);
        }
    }

    #[test]
    fn sobolev_data_invariants() {
        let s = SobolevData::new(vec![0.5, 2.0, 3.0]).unwrap();
        assert_eq!(s.sobolev_1_norm, 2.5);
        assert!(SobolevData::new(vec![1.0]).is_err());
        assert!(SobolevData::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn discrete_seminorms() {
        let mesh = build_interval_mesh(16).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        let ones = vec![1.0; spec.dof_count()];
        // Constant on [h, 1] but pinned to 0 at x = 0: only the first element has slope.
        let grad = measure_sobolev(&mesh, &spec, &ones, 1).unwrap();
        assert_relative_eq!(grad, 16f64.sqrt(), epsilon = 1e-12);
        let w = assemble_gram(&mesh, &spec).unwrap();
        let c: Vec<f64> = (0..spec.dof_count()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let l2 = measure_sobolev(&mesh, &spec, &c, 0).unwrap();
        assert_relative_eq!(l2, dot(&c, &w.matvec(&c)).sqrt(), epsilon = 1e-13);
        assert!(measure_sobolev(&mesh, &spec, &c, 2).is_err());
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        // Dirichlet conditions leave zero as the only constant in the space.
        let mesh = build_interval_mesh(4).unwrap();
        let spec = BasisSpec::new(&mesh, 2).unwrap();
        assert_eq!(measure_sobolev(&mesh, &spec, &vec![0.0; spec.dof_count()], 1).unwrap(), 0.0);
        let mesh = build_square_triangulation(4).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        assert_eq!(measure_sobolev(&mesh, &spec, &vec![0.0; spec.dof_count()], 1).unwrap(), 0.0);
    }

    #[test]
    fn interpolant_norms_converge() {
        let u = |x: f64| x - x * x / 2.0;
        let mut prev = f64::INFINITY;
        for n in [16, 64, 256] {
            let mesh = build_interval_mesh(n).unwrap();
            let spec = BasisSpec::new(&mesh, 1).unwrap();
            let c: Vec<f64> = spec.node_of_dof.iter().map(|&node| u(spec.node_coords[node][0])).collect();
            let l2 = measure_sobolev(&mesh, &spec, &c, 0).unwrap();
            let h1 = measure_sobolev(&mesh, &spec, &c, 1).unwrap();
            assert!((l2 - (2.0f64 / 15.0).sqrt()).abs() < 1.0 / (n * n) as f64);
            let gap = (h1 - 1.0 / 3f64.sqrt()).abs();
            assert!(gap < prev && gap < 1.0 / n as f64);
            prev = gap;
        }
    }
}
