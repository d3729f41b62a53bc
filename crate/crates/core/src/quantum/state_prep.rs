//! Grover–Rudolph state preparation from prefix weights.
//!
//! For a target state `|psi>` on `n` qubits the weight of a bit prefix `x` is
//! `W_x = sum_y |<xy|psi>|^2`. Descending the prefix tree, each qubit is
//! rotated so the branch `x0` receives the fraction `W_x0 / W_x` of the
//! current probability. The product of these fractions telescopes to `W_x` at
//! the leaves.
//!
//! For FEM load vectors on a uniform 1D mesh with polynomial data, the weights
//! are sums of squared load entries `S(a, b) = sum_{i=a}^{b} <phi_i, f>^2`.
//! Each load entry is a fixed polynomial in the element position, so `S(a, b)`
//! follows in closed form from power sums, at a cost independent of `b - a`.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::statevector::{qubits_for, Statevector};
use crate::error::{invalid, FemError, Result};
use crate::mesh::{BasisSpec, Mesh};
use crate::poly::Polynomial;

/// Register size beyond which preparation is refused.
pub const MAX_PREP_QUBITS: usize = 14;

/// Source of prefix weights and amplitude signs for a target state.
pub trait WeightOracle {
    fn n_qubits(&self) -> usize;

    /// `W_x` for the prefix `x` of length `depth`, read as a big-endian integer.
    fn weight(&self, depth: usize, prefix: usize) -> f64;

    /// Sign of the amplitude at a full index.
    fn sign(&self, index: usize) -> f64;

    /// Additive error bound of each weight query; zero for exact oracles.
    fn accuracy(&self) -> f64 {
        0.0
    }

    /// Length of the unpadded block of the target state.
    fn active_len(&self) -> usize {
        1 << self.n_qubits()
    }
}

/// Exact weights of an explicit vector, stored as a binary tree of partial sums
/// so that `W_x = W_x0 + W_x1` holds bit for bit.
#[derive(Debug, Clone)]
pub struct TreeWeights {
    levels: Vec<Vec<f64>>,
    signs: Vec<f64>,
    active: usize,
}

impl TreeWeights {
    /// Weights of the normalized, zero-padded `v`.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        let state = Statevector::from_vector(v)?;
        let n = state.n_qubits();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = state.amplitudes().iter().map(|a| a * a).collect();
        for depth in (0..n).rev() {
            levels[depth] = levels[depth + 1].chunks(2).map(|c| c[0] + c[1]).collect();
        }
        let signs = state.amplitudes().iter().map(|a| if *a < 0.0 { -1.0 } else { 1.0 }).collect();
        Ok(Self { levels, signs, active: v.len() })
    }
}

impl WeightOracle for TreeWeights {
    fn n_qubits(&self) -> usize {
        self.levels.len() - 1
    }

    fn weight(&self, depth: usize, prefix: usize) -> f64 {
        self.levels[depth][prefix]
    }

    fn sign(&self, index: usize) -> f64 {
        self.signs[index]
    }

    fn active_len(&self) -> usize {
        self.active
    }
}

/// Wraps an oracle with a deterministic additive error of at most `accuracy`
/// per query; weights are clamped at zero.
pub struct NoisyWeights<'a> {
    inner: &'a dyn WeightOracle,
    accuracy: f64,
    seed: u64,
}

impl<'a> NoisyWeights<'a> {
    pub fn new(inner: &'a dyn WeightOracle, accuracy: f64, seed: u64) -> Self {
        Self { inner, accuracy, seed }
    }

    /// Accuracy `eps^2 / (n 2^n)`, enough for an `O(eps)`-accurate state.
    pub fn for_target(inner: &'a dyn WeightOracle, eps: f64, seed: u64) -> Self {
        let n = inner.n_qubits().max(1);
        Self::new(inner, eps * eps / (n as f64 * (1u64 << n) as f64), seed)
    }
}

impl WeightOracle for NoisyWeights<'_> {
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    fn weight(&self, depth: usize, prefix: usize) -> f64 {
        let key = self.seed ^ ((depth as u64) << 56) ^ (prefix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        (self.inner.weight(depth, prefix) + self.accuracy * rng.gen_range(-1.0..=1.0)).max(0.0)
    }

    fn sign(&self, index: usize) -> f64 {
        self.inner.sign(index)
    }

    fn accuracy(&self) -> f64 {
        self.accuracy
    }

    fn active_len(&self) -> usize {
        self.inner.active_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    /// Constant `c` in the truncation threshold `c eps^2 / 2^n`.
    pub truncation_constant: f64,
    /// Target accuracy; defaults to the one implied by the oracle accuracy,
    /// `eps^2 = accuracy * n * 2^n`.
    pub target_eps: Option<f64>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { truncation_constant: 1.0, target_eps: None }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub state: Statevector,
    pub weight_queries: u64,
    /// Branches dropped because their weight fell below the threshold.
    pub truncated_branches: u64,
}

pub fn grover_rudolph_prepare(oracle: &dyn WeightOracle, n_qubits: usize) -> Result<Statevector> {
    Ok(grover_rudolph_prepare_with(oracle, n_qubits, &PrepConfig::default())?.state)
}

pub fn grover_rudolph_prepare_with(
    oracle: &dyn WeightOracle,
    n_qubits: usize,
    config: &PrepConfig,
) -> Result<Prepared> {
    if n_qubits > MAX_PREP_QUBITS {
        return Err(invalid(format!("{n_qubits} qubits exceed the preparation cap of {MAX_PREP_QUBITS}")));
    }
    if oracle.n_qubits() != n_qubits {
        return Err(invalid(format!("oracle is defined on {} qubits, not {n_qubits}", oracle.n_qubits())));
    }
    let dim = 1usize << n_qubits;
    let accuracy = oracle.accuracy();
    let eps_sq = match config.target_eps {
        Some(e) => e * e,
        None => accuracy * n_qubits.max(1) as f64 * dim as f64,
    };
    let threshold = config.truncation_constant * eps_sq / dim as f64;
    let tol = 1e-10 + 3.0 * accuracy;

    let mut queries = 1u64;
    let root = oracle.weight(0, 0);
    check_weight(root, 0, 0)?;
    if (root - 1.0).abs() > tol {
        return Err(invalid(format!("root weight is {root}, expected 1")));
    }
    // (prefix, W_prefix, probability assigned so far)
    let mut frontier = vec![(0usize, root, 1.0f64)];
    let mut truncated = 0u64;
    for depth in 0..n_qubits {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (prefix, w, p) in frontier {
            let (x0, x1) = (2 * prefix, 2 * prefix + 1);
            let mut w0 = oracle.weight(depth + 1, x0);
            let mut w1 = oracle.weight(depth + 1, x1);
            queries += 2;
            check_weight(w0, depth + 1, x0)?;
            check_weight(w1, depth + 1, x1)?;
            if (w0 + w1 - w).abs() > tol {
                return Err(invalid(format!(
                    "inconsistent weights at depth {depth}, prefix {prefix}: {w0} + {w1} != {w}"
                )));
            }
            for wc in [&mut w0, &mut w1] {
                if *wc > 0.0 && *wc < threshold {
                    *wc = 0.0;
                    truncated += 1;
                }
            }
            let total = w0 + w1;
            if total <= 0.0 {
                continue;
            }
            let p0 = (w0 / total).clamp(0.0, 1.0);
            if w0 > 0.0 {
                next.push((x0, w0, p * p0));
            }
            if w1 > 0.0 {
                next.push((x1, w1, p * (1.0 - p0)));
            }
        }
        frontier = next;
    }
    let mut amplitudes = vec![0.0; dim];
    for (index, _, p) in frontier {
        amplitudes[index] = oracle.sign(index) * p.sqrt();
    }
    let s = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    if s == 0.0 {
        return Err(FemError::ZeroNorm("every branch was truncated".into()));
    }
    amplitudes.iter_mut().for_each(|a| *a /= s);
    let active = oracle.active_len();
    amplitudes[active..].iter_mut().for_each(|a| *a = 0.0);
    Ok(Prepared {
        state: Statevector::from_amplitudes(amplitudes, active)?,
        weight_queries: queries,
        truncated_branches: truncated,
    })
}

fn check_weight(w: f64, depth: usize, prefix: usize) -> Result<()> {
    if w < 0.0 || !w.is_finite() {
        return Err(invalid(format!("weight {w} at depth {depth}, prefix {prefix} is not a nonnegative number")));
    }
    Ok(())
}

/// Bernoulli numbers `B_0..=B_m` with `B_1 = +1/2`.
fn bernoulli_plus(m: usize) -> Vec<f64> {
    let binom = |n: i64, k: i64| -> i64 { (0..k).fold(1i64, |acc, i| acc * (n - i) / (i + 1)) };
    let mut b: Vec<Ratio<i64>> = vec![Ratio::from_integer(1)];
    for n in 1..=m as i64 {
        let s: Ratio<i64> = (0..n).map(|j| b[j as usize] * binom(n + 1, j)).sum();
        b.push(-s / (n + 1));
    }
    if m >= 1 {
        b[1] = Ratio::new(1, 2);
    }
    b.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Precomputed closed form of `S(a, b)` for one load function.
#[derive(Debug, Clone)]
pub struct LoadSquareSums {
    degree: usize,
    elements: usize,
    h: f64,
    /// Squared entry polynomial in `y = m h` for each node class: index 0 is
    /// the interior vertex class, `l` in `1..k` the element-interior nodes.
    squared: Vec<Polynomial>,
    /// Entry polynomials before squaring, same indexing.
    entries: Vec<Polynomial>,
    /// Squared entry of the free end node.
    last: f64,
    last_entry: f64,
    bernoulli: Vec<f64>,
}

fn check_uniform_1d(mesh: &Mesh, spec: &BasisSpec) -> Result<()> {
    spec.check_mesh(mesh)?;
    if mesh.dimension != 1 {
        return Err(FemError::Unsupported("closed-form weight sums need a 1D mesh".into()));
    }
    let h = 1.0 / mesh.n as f64;
    let uniform = mesh.vertices.iter().enumerate().all(|(i, v)| (v[0] - i as f64 * h).abs() <= 1e-12);
    if !uniform {
        return Err(FemError::Unsupported("closed-form weight sums need a uniform mesh".into()));
    }
    Ok(())
}

impl LoadSquareSums {
    pub fn new(mesh: &Mesh, spec: &BasisSpec, f: &Polynomial) -> Result<Self> {
        check_uniform_1d(mesh, spec)?;
        let k = spec.degree;
        let n = mesh.n;
        let h = 1.0 / n as f64;
        // Entry of local shape l on the element starting at y, as a polynomial in y:
        // h * scale * sum_p c_p sum_q C(p, q) h^q mu_{l,q} y^{p-q}, mu_{l,q} = int_0^1 t^q psi_l.
        let local: Vec<Polynomial> = spec
            .shapes_1d
            .iter()
            .map(|psi| {
                let moment = |q: usize| -> f64 {
                    psi.coeffs.iter().enumerate().map(|(c, a)| a / (q + c + 1) as f64).sum()
                };
                let deg = f.coeffs.len();
                let mut out = vec![0.0; deg.max(1)];
                for (p, &cp) in f.coeffs.iter().enumerate() {
                    for q in 0..=p {
                        out[p - q] += cp * binomial(p, q) * h.powi(q as i32) * moment(q);
                    }
                }
                Polynomial::new(out).scale(h * spec.scale)
            })
            .collect();
        let add = |a: &Polynomial, b: &Polynomial| {
            let len = a.coeffs.len().max(b.coeffs.len());
            Polynomial::new(
                (0..len)
                    .map(|i| a.coeffs.get(i).unwrap_or(&0.0) + b.coeffs.get(i).unwrap_or(&0.0))
                    .collect(),
            )
        };
        let mut entries = vec![add(&local[k].shift(-h), &local[0])];
        entries.extend(local[1..k].iter().cloned());
        let squared: Vec<Polynomial> = entries.iter().map(|p| p.mul(p)).collect();
        let max_deg = squared.iter().map(|p| p.degree()).max().unwrap_or(0);
        let last_entry = local[k].eval((n - 1) as f64 * h);
        Ok(Self {
            degree: k,
            elements: n,
            h,
            squared,
            entries,
            last: last_entry * last_entry,
            last_entry,
            bernoulli: bernoulli_plus(max_deg + 1),
        })
    }

    pub fn dof_count(&self) -> usize {
        self.degree * self.elements
    }

    /// `sum_{m=0}^{hi} (m h)^r`.
    fn power_sum(&self, r: usize, hi: i64) -> f64 {
        if hi < 0 {
            return 0.0;
        }
        let big_m = hi as f64 * self.h;
        if r == 0 {
            return hi as f64 + 1.0;
        }
        let mut s = 0.0;
        for j in 0..=r {
            s += binomial(r + 1, j) * self.bernoulli[j] * big_m.powi((r + 1 - j) as i32) * self.h.powi(j as i32 - 1);
        }
        s / (r + 1) as f64
    }

    fn class_sum(&self, class: usize, lo: i64, hi: i64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        self.squared[class]
            .coeffs
            .iter()
            .enumerate()
            .map(|(r, g)| g * (self.power_sum(r, hi) - self.power_sum(r, lo - 1)))
            .sum()
    }

    /// `S(a, b)` over dof indices; indices past the last dof contribute zero.
    pub fn sum(&self, a: usize, b: usize) -> f64 {
        let dofs = self.dof_count();
        if a > b || a >= dofs {
            return 0.0;
        }
        let b = b.min(dofs - 1);
        let k = self.degree as i64;
        let n = self.elements as i64;
        // Dof i sits at node j = i + 1.
        let (lo_j, hi_j) = (a as i64 + 1, b as i64 + 1);
        let div_ceil = |x: i64, d: i64| (x + d - 1).div_euclid(d);
        let mut total = 0.0;
        // Vertices j = m k, 1 <= m <= n - 1.
        total += self.class_sum(0, div_ceil(lo_j, k).max(1), (hi_j.div_euclid(k)).min(n - 1));
        // Element-interior nodes j = m k + l.
        for l in 1..k {
            let lo = div_ceil(lo_j - l, k).max(0);
            let hi = (hi_j - l).div_euclid(k).min(n - 1);
            total += self.class_sum(l as usize, lo, hi);
        }
        if hi_j == k * n {
            total += self.last;
        }
        total.max(0.0)
    }

    /// Single load entry `<phi_i, f>` from the same closed form.
    pub fn entry(&self, i: usize) -> f64 {
        let k = self.degree;
        let j = i + 1;
        if j == k * self.elements {
            return self.last_entry;
        }
        let (m, l) = (j / k, j % k);
        self.entries[l].eval(m as f64 * self.h)
    }
}

/// `S(a, b) = sum_{i=a}^{b} <phi_i, f>^2` in closed form; zero for `a > b`.
pub fn exact_weight_s(mesh: &Mesh, spec: &BasisSpec, f: &Polynomial, a: usize, b: usize) -> Result<f64> {
    if a > b {
        check_uniform_1d(mesh, spec)?;
        return Ok(0.0);
    }
    Ok(LoadSquareSums::new(mesh, spec, f)?.sum(a, b))
}

/// Exact weight oracle for the (optionally negated) load vector of a
/// polynomial on a uniform 1D mesh.
#[derive(Debug, Clone)]
pub struct FemLoadWeights {
    sums: LoadSquareSums,
    total: f64,
    n_qubits: usize,
    negate: bool,
}

impl FemLoadWeights {
    pub fn new(mesh: &Mesh, spec: &BasisSpec, f: &Polynomial, negate: bool) -> Result<Self> {
        let sums = LoadSquareSums::new(mesh, spec, f)?;
        let dofs = sums.dof_count();
        let total = sums.sum(0, dofs - 1);
        if !(total > 0.0) {
            return Err(FemError::ZeroNorm("load vector vanishes".into()));
        }
        Ok(Self { sums, total, n_qubits: qubits_for(dofs), negate })
    }

    /// `||f~||`.
    pub fn norm(&self) -> f64 {
        self.total.sqrt()
    }
}

impl WeightOracle for FemLoadWeights {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn weight(&self, depth: usize, prefix: usize) -> f64 {
        let span = 1usize << (self.n_qubits - depth);
        self.sums.sum(prefix * span, (prefix + 1) * span - 1) / self.total
    }

    fn sign(&self, index: usize) -> f64 {
        if index >= self.sums.dof_count() {
            return 1.0;
        }
        let s = if self.sums.entry(index) < 0.0 { -1.0 } else { 1.0 };
        if self.negate {
            -s
        } else {
            s
        }
    }

    fn active_len(&self) -> usize {
        self.sums.dof_count()
    }
}

/// `<phi_i, f>` by repeated integration by parts:
/// `sum_{j=0}^{k} (-1)^j [phi_i^{(j)} F_{j+1}]` over each element of the
/// support, where `F_j` is the `j`-fold antiderivative of `f`.
///
/// `antiderivatives[j - 1]` must hold `F_j` for `j = 1..=k+1`. Each `F_j` is
/// re-based at the element's left end so that the endpoint differences carry
/// no cancellation.
pub fn darboux_load_entry(spec: &BasisSpec, antiderivatives: &[Polynomial], i: usize) -> Result<f64> {
    if spec.dimension != 1 {
        return Err(FemError::Unsupported("integration by parts entries are 1D only".into()));
    }
    let k = spec.degree;
    if antiderivatives.len() < k + 1 {
        return Err(invalid(format!("need antiderivatives up to order {}, got {}", k + 1, antiderivatives.len())));
    }
    for j in 1..=k {
        let (lower, upper) = (&antiderivatives[j - 1], &antiderivatives[j]);
        let d = upper.derivative();
        let scale = lower.coeffs.iter().chain(&d.coeffs).fold(1.0f64, |m, c| m.max(c.abs()));
        let len = d.coeffs.len().max(lower.coeffs.len());
        let consistent = (0..len).all(|c| {
            (d.coeffs.get(c).unwrap_or(&0.0) - lower.coeffs.get(c).unwrap_or(&0.0)).abs() <= 1e-12 * scale
        });
        if !consistent {
            return Err(invalid(format!("antiderivative of order {} is not an antiderivative of order {j}", j + 1)));
        }
    }
    if i >= spec.dof_count() {
        return Err(invalid(format!("dof {i} out of range ({} dofs)", spec.dof_count())));
    }
    let h = 1.0 / spec.mesh_n as f64;
    let node = spec.node_of_dof[i];
    let mut total = 0.0;
    for &e in &spec.support_map[i] {
        let a = e as f64 * h;
        let l = spec.element_nodes[e].iter().position(|&g| g == node).expect("support map is consistent");
        let mut shape = spec.shapes_1d[l].clone();
        for j in 0..=k {
            // F_{j+1} minus its Taylor polynomial of degree j at a, evaluated at b = a + h.
            let local = antiderivatives[j].shift(a);
            let tail: f64 = local.coeffs.iter().enumerate().skip(j + 1).map(|(q, c)| c * h.powi(q as i32)).sum();
            let deriv_at_b = shape.eval(1.0) / h.powi(j as i32);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * deriv_at_b * tail;
            shape = shape.derivative();
        }
    }
    Ok(spec.scale * total)
}
