//! Lower-bound demonstrations.
//!
//! The hybrid experiment runs an algorithm that interleaves `T` uses of a
//! black box `A_psi` (mapping `|0>` to `|psi>`) with fixed orthogonal maps.
//! Swapping in `A_phi` for a nearby `|phi>` moves the final state by at most
//! `sqrt(2) T ||psi - phi||`, which caps the optimal probability of telling
//! the two apart at `1/2 + T ||psi - phi|| / sqrt(2)`.
//!
//! The bump-oracle search hides a marked cell among `N` in the data of a
//! trivial boundary value problem: the solution is a smooth bump on the
//! marked cell, so deciding on which half of the domain it sits reduces to
//! integrating `u^2` over `[0, 1/2]`.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::GaussRule;
use crate::quantum::Statevector;

/// `||f_0||^2 = (1/2) int_{-1}^{1} B(x)^2 dx`, the integral of `u^2` over the
/// marked cell. Computed by adaptive Gauss–Legendre quadrature to 1e-15.
pub const BUMP_SQUARED_INTEGRAL: f64 = 0.066_543_060_422_497_14;

/// Largest register for the hybrid experiment.
pub const MAX_HYBRID_DIM: usize = 1 << 10;

/// Orthogonality tolerance for the black-box completions and interleaving maps.
const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Real orthogonal matrix from the QR factorization of a seeded Gaussian
/// matrix, with column signs fixed so the draw is Haar distributed.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let d = m.transpose() * m - DMatrix::identity(m.ncols(), m.ncols());
    d.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Two black boxes differing in the state they prepare, plus the fixed
/// interleaving maps `U_1 ..= U_{T+1}` of the algorithm.
#[derive(Debug, Clone)]
pub struct BlackBoxPair {
    pub psi: Statevector,
    pub phi: Statevector,
    /// `||psi - phi||`, measured.
    pub separation: f64,
    pub uses: usize,
    pub interleaving: Vec<DMatrix<f64>>,
    /// Unit vector in span{psi, phi} orthogonal to `psi`.
    pub phi_perp: DVector<f64>,
    /// Unit vector in span{psi, phi} orthogonal to `phi`.
    pub psi_perp: DVector<f64>,
    pub a_psi: DMatrix<f64>,
    pub a_phi: DMatrix<f64>,
}

impl BlackBoxPair {
    pub fn new(psi: Statevector, phi: Statevector, uses: usize, seed: u64) -> Result<Self> {
        let dim = psi.dim();
        if phi.dim() != dim {
            return Err(invalid(format!("states have dimensions {dim} and {}", phi.dim())));
        }
        if !(2..=MAX_HYBRID_DIM).contains(&dim) {
            return Err(invalid(format!("dimension {dim} outside 2..={MAX_HYBRID_DIM}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = DVector::from_column_slice(psi.amplitudes());
        let f = DVector::from_column_slice(phi.amplitudes());
        let c = p.dot(&f);
        // psi' = (c phi - psi) / |.|; this orientation makes |phi' - psi'| = |psi - phi|.
        let (along_phi, along_psi) = (&f - &p * c, &f * c - &p);
        let (phi_perp, psi_perp) = if along_phi.norm() > 1e-10 {
            (along_phi.normalize(), along_psi.normalize())
        } else {
            // Equal states: any common unit vector orthogonal to both will do.
            let mut w = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            w -= &p * p.dot(&w);
            let w = w.normalize();
            (w.clone(), w)
        };
        // Shared columns zeta_i: complete {psi, phi_perp} to an orthonormal basis.
        let mut seed_basis = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        seed_basis.set_column(0, &p);
        seed_basis.set_column(1, &phi_perp);
        let completion = seed_basis.qr().q();
        let mut a_psi = completion.clone();
        a_psi.set_column(0, &p);
        a_psi.set_column(1, &phi_perp);
        let mut a_phi = completion;
        a_phi.set_column(0, &f);
        a_phi.set_column(1, &psi_perp);
        for (name, a) in [("A_psi", &a_psi), ("A_phi", &a_phi)] {
            let defect = orthogonality_defect(a);
            if defect > ORTHOGONALITY_TOL {
                return Err(invalid(format!("{name} completion is not orthogonal (defect {defect:.3e})")));
            }
        }
        let interleaving: Vec<_> = (0..=uses).map(|_| random_orthogonal(dim, &mut rng)).collect();
        if let Some(defect) = interleaving.iter().map(orthogonality_defect).reduce(f64::max) {
            if defect > ORTHOGONALITY_TOL {
                return Err(invalid(format!("interleaving map is not orthogonal (defect {defect:.3e})")));
            }
        }
        Ok(Self { separation: psi.distance(&phi)?, psi, phi, uses, interleaving, phi_perp, psi_perp, a_psi, a_phi })
    }

    /// Random pair on `n_qubits` with `||psi - phi|| = separation`.
    pub fn random(n_qubits: usize, separation: f64, uses: usize, seed: u64) -> Result<Self> {
        if !(0.0..=2.0).contains(&separation) {
            return Err(invalid(format!("separation must lie in [0, 2], got {separation}")));
        }
        let dim = 1usize << n_qubits;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_d0f5_ab1e);
        let p: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let psi = Statevector::from_vector(&p)?;
        let pv = DVector::from_column_slice(psi.amplitudes());
        let mut w = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        w -= &pv * pv.dot(&w);
        let w = w.normalize();
        let theta = 2.0 * (separation / 2.0).asin();
        let f = &pv * theta.cos() + &w * theta.sin();
        let phi = Statevector::from_vector(f.as_slice())?;
        Self::new(psi, phi, uses, seed)
    }

    /// `eta_T = U_{T+1} A U_T ... A U_1 |0>`.
    pub fn final_state(&self, black_box: &DMatrix<f64>) -> DVector<f64> {
        let dim = black_box.nrows();
        let mut state = DVector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 });
        for (t, u) in self.interleaving.iter().enumerate() {
            state = u * state;
            if t < self.uses {
                state = black_box * state;
            }
        }
        state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridOutcome {
    pub uses: usize,
    pub separation: f64,
    /// Optimal success probability `1/2 + sqrt(1 - <eta_psi|eta_phi>^2) / 2`.
    pub exact_probability: f64,
    /// Success frequency of the optimal measurement over the sampled trials.
    pub empirical_probability: f64,
    /// `exact_probability - 1/2`.
    pub advantage: f64,
    /// `1/2 + T separation / sqrt(2)`.
    pub bound: f64,
    /// `||eta_psi - eta_phi||`.
    pub state_gap: f64,
    /// `||A_psi - A_phi||` in operator norm, at most `sqrt(2) separation`.
    pub operator_gap: f64,
    /// `||phi' - psi'||`, equal to the separation.
    pub completion_gap: f64,
}

/// Exact and sampled optimal distinguishing probabilities for the pair.
pub fn hybrid_experiment(pair: &BlackBoxPair, trials: u64, seed: u64) -> Result<HybridOutcome> {
    let a = pair.final_state(&pair.a_psi);
    let b = pair.final_state(&pair.a_phi);
    let overlap = a.dot(&b);
    let trace_half = (1.0 - overlap * overlap).max(0.0).sqrt();
    let exact_probability = 0.5 + 0.5 * trace_half;

    // Optimal measurement: projector onto the positive eigenvector of
    // |a><a| - |b><b|, which lies in span{a, b}.
    let mut empirical_probability = exact_probability;
    if trials > 0 {
        let (p_a, p_b_wrong) = if trace_half > 1e-14 {
            let b_perp = (&b - &a * overlap) / trace_half;
            // In the basis {a, b_perp}: a = (1, 0), b = (c, s).
            let (c, s) = (overlap, trace_half);
            let m = nalgebra::Matrix2::new(1.0 - c * c, -c * s, -c * s, -s * s);
            let eig = m.symmetric_eigen();
            let idx = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
            let v = eig.eigenvectors.column(idx);
            let v_full = &a * v[0] + &b_perp * v[1];
            (v_full.dot(&a).powi(2), v_full.dot(&b).powi(2))
        } else {
            (1.0, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut correct = 0u64;
        for _ in 0..trials {
            let given_psi = rng.gen::<bool>();
            let says_psi = rng.gen::<f64>() < if given_psi { p_a } else { p_b_wrong };
            correct += (given_psi == says_psi) as u64;
        }
        empirical_probability = correct as f64 / trials as f64;
    }

    let diff = &pair.a_psi - &pair.a_phi;
    let operator_gap = diff.singular_values().iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(HybridOutcome {
        uses: pair.uses,
        separation: pair.separation,
        exact_probability,
        empirical_probability,
        advantage: exact_probability - 0.5,
        bound: 0.5 + pair.uses as f64 * pair.separation / std::f64::consts::SQRT_2,
        state_gap: (&a - &b).norm(),
        operator_gap,
        completion_gap: (&pair.phi_perp - &pair.psi_perp).norm(),
    })
}

/// `B(x) = exp(-1 / (1 - x^2))` on `(-1, 1)`, zero elsewhere.
pub fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// `f_0(x) = sqrt(N) B(2 N x - 1)`, supported on `[0, 1/N]`.
pub fn bump_f0(n: usize, x: f64) -> f64 {
    (n as f64).sqrt() * bump(2.0 * n as f64 * x - 1.0)
}

/// Marked-index oracle that counts its evaluations.
#[derive(Debug)]
pub struct BumpOracle {
    n: usize,
    marked: usize,
    queries: Cell<u64>,
}

impl BumpOracle {
    pub fn new(n: usize, marked: usize) -> Result<Self> {
        if n < 2 || marked >= n {
            return Err(invalid(format!("need N >= 2 and marked index below N, got N = {n}, y0 = {marked}")));
        }
        Ok(Self { n, marked, queries: Cell::new(0) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn query(&self, y: usize) -> bool {
        self.queries.set(self.queries.get() + 1);
        y == self.marked
    }

    pub fn queries(&self) -> u64 {
        self.queries.get()
    }

    /// Solution value `u(x)`: one oracle query at cell `floor(N x)`.
    pub fn solution(&self, x: f64) -> f64 {
        let y = ((x * self.n as f64).floor() as usize).min(self.n - 1);
        if self.query(y) {
            bump_f0(self.n, x - y as f64 / self.n as f64)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStrategy {
    DeterministicScan,
    RandomScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Whether the marked cell lies in the left half.
    pub left_half: bool,
    pub queries: u64,
    /// Accumulated `int_0^{1/2} u^2` at the point of decision.
    pub integral: f64,
}

/// Quadrature points per cell.
const POINTS_PER_CELL: usize = 10;

/// Integrates `u^2` over the left half cell by cell and stops as soon as the
/// running integral exceeds `C/2`.
pub fn oracle_search_demo(oracle: &BumpOracle, strategy: ScanStrategy, seed: u64) -> SearchOutcome {
    let n = oracle.n();
    let mut cells: Vec<usize> = (0..n / 2).collect();
    if strategy == ScanStrategy::RandomScan {
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let rule = GaussRule::new(POINTS_PER_CELL);
    let width = 1.0 / n as f64;
    let threshold = BUMP_SQUARED_INTEGRAL / 2.0;
    let mut integral = 0.0;
    for y in cells {
        let lo = y as f64 * width;
        integral += rule.integrate(lo, lo + width, |x| oracle.solution(x).powi(2));
        if integral > threshold {
            return SearchOutcome { left_half: true, queries: oracle.queries(), integral };
        }
    }
    SearchOutcome { left_half: false, queries: oracle.queries(), integral }
}

/// `|f_0|_1`, which grows linearly in `N`.
pub fn bump_h1_seminorm(n: usize) -> f64 {
    let rule = GaussRule::new(40);
    let d = |x: f64| {
        let t = 2.0 * n as f64 * x - 1.0;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t * t;
        (n as f64).sqrt() * bump(t) * (-2.0 * t / (s * s)) * 2.0 * n as f64
    };
    let pieces = 64;
    let w = 1.0 / (n * pieces) as f64;
    (0..pieces).map(|i| rule.integrate(i as f64 * w, (i + 1) as f64 * w, |x| d(x).powi(2))).sum::<f64>().sqrt()
}
