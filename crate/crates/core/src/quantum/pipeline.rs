//! End-to-end estimate of `R = int r u` by the quantum pipeline:
//!
//! 1. pick the mesh from the discretisation share of the budget,
//! 2. prepare `|b>` for `b = -f~` from prefix weights,
//! 3. estimate `||u~||` from the solver's acceptance probability,
//! 4. run the solver to get `|u~>` and estimate `<r|u~>` with a Hadamard test,
//! 5. output `alpha N~ R~`.

use std::collections::BTreeMap;

use serde::Serialize;

use super::linear::{build_r_state, reference_solve};
use super::measure::{estimate_norm, hadamard_test_estimate, SampleBudget, SolverSource, StateSource};
use super::state_prep::{grover_rudolph_prepare_with, FemLoadWeights, PrepConfig, TreeWeights, WeightOracle};
use crate::budget::{relative_norm_share, split_budget, ErrorBudget, MeshPlan, SobolevData};
use crate::error::{FemError, Result};
use crate::problem::{DiscretizationPlan, PolyData, ProblemSpec};
use crate::quadrature::l2_norm;
use crate::resources::{quantum_cost, Pipeline, ResourceEstimate};
use crate::sparse::dot;

/// Largest accepted solver error; beyond it the output state is unconstrained.
const MAX_SOLVER_ERROR: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalEstimate {
    /// `alpha N~ R~`.
    pub estimate: f64,
    /// `sum_i u~_i <phi_i, r>` from a classical solve on the same mesh.
    pub discrete_value: f64,
    pub eps: f64,
    pub r_norm: f64,
    pub alpha: f64,
    pub load_norm: f64,
    /// `N~`, the estimate of `||u~||`.
    pub norm_estimate: f64,
    /// `R~`, the estimate of `<r|u~>`.
    pub overlap_estimate: f64,
    pub budget: ErrorBudget,
    pub mesh: MeshPlan,
    pub sobolev: SobolevData,
    pub shots_used: u64,
    pub state_prep_uses: u64,
    pub weight_queries: u64,
    pub exact_mode: bool,
    /// Modeled costs per step; overlap estimation is charged the `O(1/eps)`
    /// uses of amplitude estimation, not the sampled shot count.
    pub resources: BTreeMap<String, ResourceEstimate>,
}

impl FunctionalEstimate {
    /// `|estimate - exact| <= eps ||r||`.
    pub fn within_target(&self, exact: f64) -> bool {
        (self.estimate - exact).abs() <= self.eps * self.r_norm
    }
}

/// Runs the pipeline on `problem` with target accuracy `eps * ||r||`.
pub fn estimate_functional(problem: &ProblemSpec, eps: f64, budget: &mut SampleBudget) -> Result<FunctionalEstimate> {
    let problem = ProblemSpec { eps, ..problem.clone() };
    problem.validate_assembled()?;
    let sobolev = problem.sobolev_data()?;
    let u_norm = sobolev.l2_norm;
    if eps > u_norm {
        return Err(FemError::Unsupported(format!(
            "eps = {eps} exceeds ||u|| = {u_norm}; the estimator assumes eps <= ||u||"
        )));
    }
    let (d, k) = (problem.d, problem.k);
    let DiscretizationPlan { sobolev, mesh: plan, .. } = ProblemSpec { sobolev: Some(sobolev), ..problem.clone() }.plan()?;
    let disc = problem.discretize(plan.n)?;

    // |b> with b = -f~.
    let mut resources = BTreeMap::new();
    let (oracle, load_norm): (Box<dyn WeightOracle>, f64) = match &problem.f {
        PolyData::Univariate(f) => {
            let o = FemLoadWeights::new(&disc.mesh, &disc.spec, f, true)?;
            let norm = o.norm();
            (Box::new(o), norm)
        }
        PolyData::Bivariate(_) => (Box::new(TreeWeights::from_vector(&disc.rhs)?), disc.load.norm()),
    };
    let prepared = grover_rudolph_prepare_with(oracle.as_ref(), oracle.n_qubits(), &PrepConfig::default())?;
    let b_state = prepared.state;
    resources.insert(
        "state_preparation".to_string(),
        ResourceEstimate {
            pipeline: Pipeline::Quantum,
            oracle_calls: BTreeMap::from([("weight_queries".to_string(), prepared.weight_queries as f64)]),
            runtime_model: prepared.weight_queries as f64,
            exponents_of_inv_eps: Vec::new(),
        },
    );

    let delta = relative_norm_share(eps, u_norm);
    let norm = estimate_norm(&disc.matrix, &b_state, delta, budget)?;
    let norm_estimate = norm.value * load_norm;
    resources.insert("norm_estimation".to_string(), norm.cost.clone());

    let (r_state, alpha) = build_r_state(&disc.mesh, &disc.spec, &problem.r)?;
    let r_norm = l2_norm(&problem.r, d);
    let mut split = split_budget(eps, &sobolev, alpha, norm_estimate, r_norm)?;
    split.h = Some(disc.mesh.h);
    split.dofs = Some(disc.spec.dof_count());
    let exact_mode = budget.is_exact();
    let eps_l = if exact_mode { 0.0 } else { split.eps_l.min(MAX_SOLVER_ERROR) };

    let seed = budget.draw_seed();
    let mut source = SolverSource::new(&disc.matrix, &b_state, eps_l, seed);
    let overlap_estimate = hadamard_test_estimate(&mut source, &r_state, split.eps_out, budget)?;
    if let Some(call) = source.call_cost() {
        let modeled_uses = if exact_mode { 1.0 } else { (1.0 / split.eps_out).ceil() };
        let mut overlap = call.clone();
        overlap.runtime_model *= modeled_uses;
        overlap.oracle_calls.values_mut().for_each(|v| *v *= modeled_uses);
        overlap.oracle_calls.insert("solver_calls".to_string(), modeled_uses);
        overlap.oracle_calls.insert("sampled_shots".to_string(), source.invocations() as f64);
        resources.insert("overlap_estimation".to_string(), overlap);
    }
    let s = disc.matrix.max_row_nnz();
    resources.insert("end_to_end_model".to_string(), quantum_cost(d, k, eps, &sobolev, s, false)?);

    let u_tilde = reference_solve(&disc.matrix, &disc.rhs)?;
    let discrete_value = dot(&u_tilde, &r_state.active_amplitudes().iter().map(|a| a * alpha).collect::<Vec<_>>());

    Ok(FunctionalEstimate {
        estimate: alpha * norm_estimate * overlap_estimate,
        discrete_value,
        eps,
        r_norm,
        alpha,
        load_norm,
        norm_estimate,
        overlap_estimate,
        budget: if exact_mode { split.exact() } else { split },
        mesh: plan,
        sobolev,
        shots_used: budget.shots_used(),
        state_prep_uses: budget.uses_of_state_prep(),
        weight_queries: prepared.weight_queries,
        exact_mode,
        resources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Polynomial, Polynomial2};

    fn model(eps: f64) -> ProblemSpec {
        ProblemSpec::poisson_1d(1, Polynomial::constant(-1.0), Polynomial::constant(1.0), eps)
    }

    #[test]
    fn model_functional_within_target() {
        let eps = 0.01;
        let mut hits = 0;
        for seed in 0..20 {
            let mut budget = SampleBudget::unlimited(seed);
            let out = estimate_functional(&model(eps), eps, &mut budget).unwrap();
            hits += out.within_target(1.0 / 3.0) as usize;
            assert_eq!(out.state_prep_uses, budget.uses_of_state_prep());
        }
        assert!(hits >= 14, "{hits}");
    }

    #[test]
    fn exact_mode_leaves_only_discretisation_error() {
        let eps = 0.02;
        let mut budget = SampleBudget::exact(0);
        let out = estimate_functional(&model(eps), eps, &mut budget).unwrap();
        assert!((out.estimate - out.discrete_value).abs() < 1e-12);
        assert!((out.estimate - 1.0 / 3.0).abs() <= out.r_norm * out.budget.eps_d);
        assert_eq!(out.budget.eps_l, 0.0);
    }

    #[test]
    fn orthogonal_functional_in_2d() {
        // u is symmetric under (x, y) -> (1 - x, 1 - y) while r = x + y - 1 is odd.
        let r = Polynomial2::new(vec![vec![-1.0, 1.0], vec![1.0]]);
        let spec = ProblemSpec::poisson_2d(Polynomial2::constant(-1.0), r, 0.02);
        let mut budget = SampleBudget::unlimited(7);
        let out = estimate_functional(&spec, 0.02, &mut budget).unwrap();
        assert!(out.discrete_value.abs() < 1e-12);
        assert!(out.estimate.abs() <= 0.02 * out.r_norm, "{}", out.estimate);
    }

    #[test]
    fn errors_surface() {
        let mut budget = SampleBudget::new(100, 0);
        assert!(matches!(
            estimate_functional(&model(0.01), 0.01, &mut budget),
            Err(FemError::BudgetExhausted { .. })
        ));
        let mut tight = model(1e-6);
        tight.max_dofs = 64;
        assert!(matches!(
            estimate_functional(&tight, 1e-6, &mut SampleBudget::unlimited(0)),
            Err(FemError::CapExceeded { .. })
        ));
        assert!(matches!(
            estimate_functional(&model(1.0), 1.0, &mut SampleBudget::unlimited(0)),
            Err(FemError::Unsupported(_))
        ));
    }

    #[test]
    fn rescaling_identity() {
        let spec = ProblemSpec::poisson_1d(2, Polynomial::new(vec![0.5, -1.0, 2.0]), Polynomial::new(vec![1.0, 3.0]), 0.01);
        let disc = spec.discretize(12).unwrap();
        let u = reference_solve(&disc.matrix, &disc.rhs).unwrap();
        let (r_state, alpha) = build_r_state(&disc.mesh, &disc.spec, &spec.r).unwrap();
        let u_norm = crate::sparse::norm(&u);
        let overlap: f64 = u.iter().zip(r_state.active_amplitudes()).map(|(a, b)| a / u_norm * b).sum();
        let direct = disc.functional(&u, &spec.r).unwrap();
        assert!((alpha * u_norm * overlap - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }
}
