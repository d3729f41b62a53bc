//! Sampling estimators: Hadamard test, swap test and norm estimation.
//!
//! Outcomes are drawn from the exact outcome distribution of each circuit.
//! Estimators sample `O(1/eps^2)` shots directly, while the resource ledger
//! charges the `O(1/eps)` uses that amplitude estimation would need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use super::linear::{reference_solve, simulated_qle, spectrum_bounds};
use super::statevector::Statevector;
use crate::error::{invalid, FemError, Result};
use crate::resources::{norm_estimation_cost, ResourceEstimate};
use crate::sparse::{norm, CsrMatrix};

/// Smallest acceptance probability the norm estimator will sample.
pub const MIN_ACCEPTANCE: f64 = 1e-9;

/// Shot allowance, randomness and use accounting shared by the estimators.
#[derive(Debug, Clone)]
pub struct SampleBudget {
    shots_remaining: u64,
    shots_used: u64,
    uses_of_state_prep: u64,
    seed: u64,
    rng: ChaCha8Rng,
    exact: bool,
}

impl SampleBudget {
    pub fn new(shots: u64, seed: u64) -> Self {
        Self {
            shots_remaining: shots,
            shots_used: 0,
            uses_of_state_prep: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            exact: false,
        }
    }

    /// Unlimited budget whose estimators return exact expectations.
    pub fn exact(seed: u64) -> Self {
        Self { exact: true, ..Self::new(u64::MAX, seed) }
    }

    pub fn unlimited(seed: u64) -> Self {
        Self::new(u64::MAX, seed)
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shots_remaining(&self) -> u64 {
        self.shots_remaining
    }

    pub fn shots_used(&self) -> u64 {
        self.shots_used
    }

    pub fn uses_of_state_prep(&self) -> u64 {
        self.uses_of_state_prep
    }

    /// Fresh seed for a sub-procedure, drawn from the budget stream.
    pub fn draw_seed(&mut self) -> u64 {
        self.rng.gen()
    }

    fn consume(&mut self, shots: u64) -> Result<()> {
        if shots > self.shots_remaining {
            return Err(FemError::BudgetExhausted { requested: shots, remaining: self.shots_remaining });
        }
        self.shots_remaining -= shots;
        self.shots_used += shots;
        Ok(())
    }

    fn binomial(&mut self, shots: u64, p: f64) -> Result<u64> {
        let dist = Binomial::new(shots, p.clamp(0.0, 1.0)).map_err(|e| invalid(e.to_string()))?;
        Ok(dist.sample(&mut self.rng))
    }
}

/// A procedure that prepares copies of a fixed state and counts its invocations.
pub trait StateSource {
    /// Prepares `copies` copies; all copies are the same pure state, so one
    /// statevector stands for them.
    fn prepare(&mut self, copies: u64) -> Result<Statevector>;

    fn invocations(&self) -> u64;
}

/// A state known in advance.
#[derive(Debug, Clone)]
pub struct FixedState {
    state: Statevector,
    invocations: u64,
}

impl FixedState {
    pub fn new(state: Statevector) -> Self {
        Self { state, invocations: 0 }
    }
}

impl StateSource for FixedState {
    fn prepare(&mut self, copies: u64) -> Result<Statevector> {
        self.invocations += copies;
        Ok(self.state.clone())
    }

    fn invocations(&self) -> u64 {
        self.invocations
    }
}

/// The solver stand-in as a state source; the output is computed once and
/// every copy is charged one solver call.
pub struct SolverSource<'a> {
    matrix: &'a CsrMatrix,
    rhs: &'a Statevector,
    eps_l: f64,
    seed: u64,
    cached: Option<(Statevector, ResourceEstimate)>,
    invocations: u64,
}

impl<'a> SolverSource<'a> {
    pub fn new(matrix: &'a CsrMatrix, rhs: &'a Statevector, eps_l: f64, seed: u64) -> Self {
        Self { matrix, rhs, eps_l, seed, cached: None, invocations: 0 }
    }

    /// Cost of a single solver call, once the state has been prepared.
    pub fn call_cost(&self) -> Option<&ResourceEstimate> {
        self.cached.as_ref().map(|(_, c)| c)
    }
}

impl StateSource for SolverSource<'_> {
    fn prepare(&mut self, copies: u64) -> Result<Statevector> {
        if self.cached.is_none() {
            let out = simulated_qle(self.matrix, self.rhs, self.eps_l, self.seed)?;
            self.cached = Some((out.state, out.cost));
        }
        self.invocations += copies;
        Ok(self.cached.as_ref().expect("cached above").0.clone())
    }

    fn invocations(&self) -> u64 {
        self.invocations
    }
}

/// Shots for an additive error `eps` on a +-1 variable: `2 ceil(1/eps^2)`.
pub fn hadamard_shots(eps: f64) -> u64 {
    2 * (1.0 / (eps * eps)).ceil() as u64
}

/// Estimate of `<u|r>` from +-1 outcomes with mean `<u|r>`.
pub fn hadamard_test_estimate(
    source: &mut dyn StateSource,
    r_state: &Statevector,
    eps_out: f64,
    budget: &mut SampleBudget,
) -> Result<f64> {
    if budget.exact {
        let u = source.prepare(1)?;
        budget.uses_of_state_prep += 1;
        return u.inner(r_state);
    }
    if !(eps_out > 0.0) {
        return Err(invalid(format!("eps_out must be positive, got {eps_out}")));
    }
    let shots = hadamard_shots(eps_out);
    budget.consume(shots)?;
    let u = source.prepare(shots)?;
    budget.uses_of_state_prep += shots;
    let overlap = u.inner(r_state)?;
    let plus = budget.binomial(shots, 0.5 * (1.0 + overlap))?;
    Ok(2.0 * plus as f64 / shots as f64 - 1.0)
}

/// Estimate of `|<psi|phi>|^2` from the swap test's "same" frequency, which
/// has mean `1/2 + |<psi|phi>|^2 / 2`.
pub fn swap_test_estimate(psi: &Statevector, phi: &Statevector, shots: u64, seed: u64) -> Result<f64> {
    if shots == 0 {
        return Err(invalid("swap test needs at least one shot"));
    }
    let overlap = psi.inner(phi)?;
    let p_same = 0.5 + 0.5 * overlap * overlap;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Binomial::new(shots, p_same.clamp(0.0, 1.0)).map_err(|e| invalid(e.to_string()))?;
    let same = dist.sample(&mut rng);
    Ok(2.0 * same as f64 / shots as f64 - 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormEstimate {
    /// Estimate of `||M^{-1} b||` for the unit vector `b`.
    pub value: f64,
    /// Acceptance probability `||A^{-1} b||^2 / kappa^2` with `A = M / lambda_max`.
    pub acceptance: f64,
    pub shots: u64,
    pub cost: ResourceEstimate,
}

/// Estimate of `||M^{-1} b||` by sampling the acceptance of the solver's
/// success flag and inverting `p = (lambda_min ||M^{-1} b||)^2`.
pub fn estimate_norm(m: &CsrMatrix, b: &Statevector, eps_rel: f64, budget: &mut SampleBudget) -> Result<NormEstimate> {
    if m.n() != b.active() {
        return Err(invalid(format!("matrix of size {} against a state with {} active amplitudes", m.n(), b.active())));
    }
    if !budget.exact && !(eps_rel > 0.0) {
        return Err(invalid(format!("relative accuracy must be positive, got {eps_rel}")));
    }
    let (lambda_min, lambda_max) = spectrum_bounds(m)?;
    let kappa = lambda_max / lambda_min;
    let exact = norm(&reference_solve(m, b.active_amplitudes())?);
    let p = (lambda_min * exact).powi(2).min(1.0);
    if p < MIN_ACCEPTANCE {
        return Err(FemError::ProbabilityTooSmall(p));
    }
    let cost = norm_estimation_cost(m.max_row_nnz(), kappa, eps_rel.max(f64::EPSILON))?;
    if budget.exact {
        budget.uses_of_state_prep += 1;
        return Ok(NormEstimate { value: exact, acceptance: p, shots: 0, cost });
    }
    // Relative standard deviation of sqrt(p_hat) is sqrt((1-p)/(p shots)) / 2.
    let shots = ((1.0 - p) / (p * eps_rel * eps_rel)).ceil() as u64 + 1;
    budget.consume(shots)?;
    budget.uses_of_state_prep += shots;
    let accepted = budget.binomial(shots, p)?;
    let p_hat = accepted as f64 / shots as f64;
    Ok(NormEstimate { value: p_hat.sqrt() / lambda_min, acceptance: p, shots, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_load, assemble_stiffness, BilinearForm};
    use crate::mesh::{build_interval_mesh, BasisSpec};
    use crate::poly::Polynomial;
    use crate::sparse::dense_solve;

    fn pair_with_overlap(c: f64) -> (Statevector, Statevector) {
        let a = Statevector::from_vector(&[1.0, 0.0]).unwrap();
        let b = Statevector::from_vector(&[c, (1.0 - c * c).sqrt()]).unwrap();
        (a, b)
    }

    #[test]
    fn hadamard_identical_and_orthogonal() {
        let (a, _) = pair_with_overlap(1.0);
        let mut budget = SampleBudget::unlimited(1);
        let mut src = FixedState::new(a.clone());
        let est = hadamard_test_estimate(&mut src, &a, 0.05, &mut budget).unwrap();
        assert!((est - 1.0).abs() <= 0.05);
        let (a, b) = pair_with_overlap(0.0);
        let mut src = FixedState::new(a);
        let est = hadamard_test_estimate(&mut src, &b, 0.05, &mut budget).unwrap();
        assert!(est.abs() <= 0.05);
        assert_eq!(src.invocations() * 2, budget.uses_of_state_prep());
        assert_eq!(budget.shots_used(), 2 * hadamard_shots(0.05));
    }

    #[test]
    fn hadamard_known_overlap() {
        // With 800 shots the estimate has standard deviation 0.8 / sqrt(800),
        // so it lands within 0.05 of 0.6 with probability about 0.923.
        let (a, b) = pair_with_overlap(0.6);
        let runs = 1000;
        let hits = (0..runs)
            .filter(|seed| {
                let mut budget = SampleBudget::unlimited(*seed);
                let mut src = FixedState::new(a.clone());
                let est = hadamard_test_estimate(&mut src, &b, 0.05, &mut budget).unwrap();
                (est - 0.6).abs() <= 0.05
            })
            .count();
        let rate = hits as f64 / runs as f64;
        assert!(rate >= 0.90, "{rate}");
    }

    #[test]
    fn hadamard_budget_and_arguments() {
        let (a, b) = pair_with_overlap(0.6);
        let mut src = FixedState::new(a.clone());
        let mut budget = SampleBudget::new(10, 0);
        assert!(matches!(
            hadamard_test_estimate(&mut src, &b, 0.1, &mut budget),
            Err(FemError::BudgetExhausted { .. })
        ));
        assert!(hadamard_test_estimate(&mut src, &b, 0.0, &mut SampleBudget::unlimited(0)).is_err());
        let exact = hadamard_test_estimate(&mut src, &b, 0.0, &mut SampleBudget::exact(0)).unwrap();
        assert!((exact - 0.6).abs() < 1e-15);
    }

    #[test]
    fn swap_test_examples() {
        let (a, _) = pair_with_overlap(1.0);
        let same = swap_test_estimate(&a, &a, 1000, 0).unwrap();
        assert_eq!(same, 1.0);
        let (a, b) = pair_with_overlap(0.0);
        let shots = 10_000;
        let est = swap_test_estimate(&a, &b, shots, 1).unwrap();
        let freq = (est + 1.0) / 2.0;
        assert!((freq - 0.5).abs() <= 3.0 * (0.25 / shots as f64).sqrt());
        let (a, b) = pair_with_overlap(0.5);
        let est = swap_test_estimate(&a, &b, shots, 2).unwrap();
        let p = 0.5 + 0.5 * 0.25;
        let sigma = 2.0 * (p * (1.0 - p) / shots as f64).sqrt();
        assert!((est - 0.25).abs() <= 3.0 * sigma);
        assert!(swap_test_estimate(&a, &b, 0, 0).is_err());
    }

    #[test]
    fn norm_of_simple_inverses() {
        let b = Statevector::from_vector(&[1.0, 2.0, 3.0]).unwrap();
        let mut budget = SampleBudget::unlimited(3);
        let est = estimate_norm(&CsrMatrix::identity(3), &b, 0.01, &mut budget).unwrap();
        assert!((est.value - 1.0).abs() <= 0.01);
        let uniform = Statevector::from_vector(&[1.0; 4]).unwrap();
        let half = CsrMatrix::from_diagonal(&[0.5; 4]);
        let est = estimate_norm(&half, &uniform, 0.01, &mut budget).unwrap();
        assert!((est.value - 2.0).abs() <= 0.02);
    }

    #[test]
    fn norm_of_poisson_solution() {
        let mesh = build_interval_mesh(32).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        let m = assemble_stiffness(&mesh, &spec, &BilinearForm::poisson()).unwrap();
        let load = assemble_load(&mesh, &spec, &Polynomial::constant(-1.0)).unwrap();
        let b = Statevector::from_vector(&load.values).unwrap();
        let exact = norm(&dense_solve(&m, b.active_amplitudes()).unwrap());
        let eps = 0.02;
        let hits = (0..60)
            .filter(|seed| {
                let mut budget = SampleBudget::unlimited(*seed);
                let est = estimate_norm(&m, &b, eps, &mut budget).unwrap();
                assert_eq!(budget.uses_of_state_prep(), est.shots);
                (est.value - exact).abs() <= eps * exact
            })
            .count();
        assert!(hits >= 40, "{hits}");
        let exact_mode = estimate_norm(&m, &b, 0.0, &mut SampleBudget::exact(0)).unwrap();
        assert!((exact_mode.value - exact).abs() < 1e-12 * exact);
        assert!(exact_mode.cost.oracle_calls["P_A"] > 0.0);
    }

    #[test]
    fn tiny_acceptance_is_refused() {
        let m = CsrMatrix::from_diagonal(&[1e-6, 1.0]);
        let b = Statevector::from_vector(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            estimate_norm(&m, &b, 0.1, &mut SampleBudget::unlimited(0)),
            Err(FemError::ProbabilityTooSmall(_))
        ));
    }

    #[test]
    fn solver_source_counts_calls() {
        let m = CsrMatrix::from_diagonal(&[1.0, 2.0, 4.0]);
        let b = Statevector::from_vector(&[1.0, 1.0, 1.0]).unwrap();
        let mut src = SolverSource::new(&m, &b, 0.0, 0);
        let mut budget = SampleBudget::unlimited(0);
        let r = Statevector::from_vector(&[4.0, 2.0, 1.0]).unwrap();
        let est = hadamard_test_estimate(&mut src, &r, 0.1, &mut budget).unwrap();
        assert_eq!(src.invocations(), budget.uses_of_state_prep());
        assert!((est - 1.0).abs() <= 0.1);
        assert!(src.call_cost().is_some());
    }
}
