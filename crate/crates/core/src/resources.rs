//! Analytic runtime model for the classical and quantum pipelines.
//!
//! Every formula is evaluated with its unknown constants set to 1 and reported
//! as a model value. Only exponents (exact rationals) and log-log slopes are
//! meant to be compared against measurements.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::budget::SobolevData;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Classical,
    ClassicalPrecond,
    Quantum,
    QuantumPrecond,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] =
        [Pipeline::Classical, Pipeline::ClassicalPrecond, Pipeline::Quantum, Pipeline::QuantumPrecond];

    pub fn is_preconditioned(self) -> bool {
        matches!(self, Pipeline::ClassicalPrecond | Pipeline::QuantumPrecond)
    }

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Classical => "classical",
            Pipeline::ClassicalPrecond => "classical_precond",
            Pipeline::Quantum => "quantum",
            Pipeline::QuantumPrecond => "quantum_precond",
        }
    }
}

/// Exact rational exponent of `1/eps`; serialized as `"p/q"` or `"p"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent(pub Ratio<i64>);

impl Exponent {
    pub fn new(numer: i64, denom: i64) -> Self {
        Self(Ratio::new(numer, denom))
    }

    pub fn integer(n: i64) -> Self {
        Self(Ratio::from_integer(n))
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Exponent {
    type Err = crate::error::FemError;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| t.trim().parse::<i64>().map_err(|_| invalid(format!("bad exponent '{s}'")));
        match s.split_once('/') {
            Some((n, d)) => {
                let d = parse(d)?;
                if d == 0 {
                    return Err(invalid(format!("bad exponent '{s}'")));
                }
                Ok(Self::new(parse(n)?, d))
            }
            None => Ok(Self::integer(parse(s)?)),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub pipeline: Pipeline,
    /// Named oracle/subroutine use counts (`P_A`, `P_b`, `P_M`, `state_prep`, `matvec`, ...).
    pub oracle_calls: BTreeMap<String, f64>,
    /// Formula value with all constants equal to 1.
    pub runtime_model: f64,
    /// Exponents of `1/eps` in the closed form, one per additive term. Empty for
    /// per-call costs that are not tied to an end-to-end accuracy.
    pub exponents_of_inv_eps: Vec<Exponent>,
}

impl ResourceEstimate {
    fn new(pipeline: Pipeline, runtime_model: f64) -> Self {
        Self { pipeline, oracle_calls: BTreeMap::new(), runtime_model, exponents_of_inv_eps: Vec::new() }
    }

    fn with_call(mut self, name: &str, count: f64) -> Self {
        self.oracle_calls.insert(name.to_string(), count);
        self
    }

    /// Largest exponent, i.e. the leading term as `eps -> 0`.
    pub fn leading_exponent(&self) -> Option<Exponent> {
        self.exponents_of_inv_eps.iter().copied().max()
    }
}

/// Fixed squared-log stand-in for `polylog(x)`.
pub fn polylog(x: f64) -> f64 {
    (1.0 + x.max(1.0).ln()).powi(2)
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

/// Conjugate gradient cost `N s sqrt(kappa) ln(1/eps_cg)`.
pub fn classical_cost(n: usize, s: usize, kappa: f64, eps_cg: f64) -> Result<ResourceEstimate> {
    check_positive(&[("N", n as f64), ("s", s as f64), ("kappa", kappa), ("eps_cg", eps_cg)])?;
    let iterations = kappa.sqrt() * (1.0 / eps_cg).ln();
    Ok(ResourceEstimate::new(Pipeline::Classical, n as f64 * s as f64 * iterations).with_call("matvec", iterations))
}

/// Typical row sparsity of a P1 stiffness matrix in `d` dimensions.
pub fn stencil_sparsity(d: usize) -> usize {
    2 * d + 1
}

/// Classical FEM pipeline: mesh from the discretisation bound, then CG with
/// `kappa = N^{2/d}` (or `O(1)` with optimal preconditioning).
pub fn classical_pipeline_cost(
    d: usize,
    k: usize,
    eps: f64,
    seminorm_k1: f64,
    preconditioned: bool,
) -> Result<ResourceEstimate> {
    check_dims(d, k)?;
    check_positive(&[("eps", eps), ("|u|_{k+1}", seminorm_k1)])?;
    let ratio = seminorm_k1 / eps;
    let n = ratio.powf(d as f64 / (k + 1) as f64);
    let kappa = if preconditioned { 1.0 } else { ratio.powf(2.0 / (k + 1) as f64) };
    let s = stencil_sparsity(d) as f64;
    let log = (1.0 / eps).ln().max(1.0);
    let runtime = n * s * kappa.sqrt() * log;
    let (pipeline, exponent) = if preconditioned {
        (Pipeline::ClassicalPrecond, Exponent::new(d as i64, k as i64 + 1))
    } else {
        (Pipeline::Classical, Exponent::new(d as i64 + 1, k as i64 + 1))
    };
    let mut est = ResourceEstimate::new(pipeline, runtime)
        .with_call("matvec", kappa.sqrt() * log)
        .with_call("dofs", n);
    est.exponents_of_inv_eps.push(exponent);
    Ok(est)
}

/// End-to-end quantum estimator cost
/// `(s kappa^2 ||u|| + sqrt(s) kappa ||u||_1) / eps * polylog`, with
/// `kappa = (|u|_{k+1}/eps)^{2/(k+1)}`, or `||u||_1 / eps * polylog` when
/// preconditioning makes `kappa = O(1)`.
pub fn quantum_cost(
    d: usize,
    k: usize,
    eps: f64,
    sobolev: &SobolevData,
    s: usize,
    preconditioned: bool,
) -> Result<ResourceEstimate> {
    check_dims(d, k)?;
    let seminorm = sobolev.seminorm(k + 1).ok_or_else(|| invalid(format!("missing |u|_{}", k + 1)))?;
    check_positive(&[("eps", eps), ("s", s as f64), ("|u|_{k+1}", seminorm)])?;
    let u1 = sobolev.sobolev_1_norm;
    let s_f = s as f64;
    if preconditioned {
        let log = polylog(s_f * u1 * seminorm / eps);
        let mut est = ResourceEstimate::new(Pipeline::QuantumPrecond, u1 / eps * log);
        est.exponents_of_inv_eps.push(Exponent::integer(1));
        return Ok(est.with_call("qle_uses", 1.0 / eps));
    }
    let kappa = (seminorm / eps).powf(2.0 / (k + 1) as f64);
    let log = polylog(s_f * kappa * u1 * seminorm / eps);
    let norm_term = s_f * kappa * kappa * sobolev.l2_norm / eps;
    let overlap_term = s_f.sqrt() * kappa * u1 / eps;
    let k1 = k as i64 + 1;
    let mut est = ResourceEstimate::new(Pipeline::Quantum, (norm_term + overlap_term) * log)
        .with_call("norm_estimation", norm_term * log)
        .with_call("overlap_estimation", overlap_term * log);
    est.exponents_of_inv_eps = vec![Exponent::new(k1 + 4, k1), Exponent::new(k1 + 2, k1)];
    Ok(est)
}

/// Norm estimation by amplitude estimation on the acceptance probability:
/// `P_A` uses `s kappa^2 / eps * polylog(s kappa / eps)`, `P_b` uses `kappa / eps`.
pub fn norm_estimation_cost(s: usize, kappa: f64, eps: f64) -> Result<ResourceEstimate> {
    check_positive(&[("s", s as f64), ("kappa", kappa), ("eps", eps)])?;
    let s_f = s as f64;
    let p_a = s_f * kappa * kappa / eps * polylog(s_f * kappa / eps);
    let p_b = kappa / eps;
    let mut est = ResourceEstimate::new(Pipeline::Quantum, p_a).with_call("P_A", p_a).with_call("P_b", p_b);
    est.exponents_of_inv_eps.push(Exponent::integer(1));
    Ok(est)
}

/// One call of the quantum linear-equations solver:
/// `s kappa polylog(s kappa / eps)` uses of `P_A` and `P_b`.
pub fn qle_cost(s: usize, kappa: f64, eps: f64) -> Result<ResourceEstimate> {
    check_positive(&[("s", s as f64), ("kappa", kappa), ("eps", eps)])?;
    let s_f = s as f64;
    let uses = s_f * kappa * polylog(s_f * kappa / eps);
    Ok(ResourceEstimate::new(Pipeline::Quantum, uses).with_call("P_A", uses).with_call("P_b", uses))
}

fn check_dims(d: usize, k: usize) -> Result<()> {
    if !(1..=8).contains(&d) || k == 0 {
        return Err(invalid(format!("need 1 <= d <= 8 and k >= 1, got d = {d}, k = {k}")));
    }
    Ok(())
}

/// Closed-form exponents of `1/eps` for each pipeline.
pub fn pipeline_exponents(pipeline: Pipeline, d: usize, k: usize) -> Vec<Exponent> {
    let (d, k1) = (d as i64, k as i64 + 1);
    match pipeline {
        Pipeline::Classical => vec![Exponent::new(d + 1, k1)],
        Pipeline::ClassicalPrecond => vec![Exponent::new(d, k1)],
        Pipeline::Quantum => vec![Exponent::new(k1 + 4, k1), Exponent::new(k1 + 2, k1)],
        Pipeline::QuantumPrecond => vec![Exponent::integer(1)],
    }
}

/// Complexity expression with the constants hidden.
fn formula(pipeline: Pipeline, d: usize, k: usize) -> String {
    let k1 = k + 1;
    let frac = |num: usize| {
        let r = Ratio::new(num as i64, k1 as i64);
        if *r.denom() == 1 {
            format!("{}", r.numer())
        } else {
            format!("({r})")
        }
    };
    let sem = format!("|u|_{k1}");
    let power = |base: &str, num: usize| if num == k1 { base.to_string() } else { format!("{base}^{}", frac(num)) };
    let ratio = format!("({sem}/eps)");
    match pipeline {
        Pipeline::Classical => power(&ratio, d + 1),
        Pipeline::ClassicalPrecond => power(&ratio, d),
        Pipeline::Quantum => format!(
            "||u|| {} / eps^{} + ||u||_1 {} / eps^{}",
            power(&sem, 4),
            frac(k + 5),
            power(&sem, 2),
            frac(k + 3)
        ),
        Pipeline::QuantumPrecond => "||u||_1 / eps".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub pipeline: Pipeline,
    pub d: usize,
    pub k: usize,
    pub eps: f64,
    pub exponents: Vec<Exponent>,
    pub formula: String,
    pub model_value: f64,
    pub oracle_counts: BTreeMap<String, f64>,
}

/// Runtime table for every pipeline at each `(d, k, eps)`.
pub fn complexity_table(
    dims: &[usize],
    degrees: &[usize],
    eps_values: &[f64],
    sobolev: &SobolevData,
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for &d in dims {
        for &k in degrees {
            for &eps in eps_values {
                for pipeline in Pipeline::ALL {
                    let seminorm = sobolev.seminorm(k + 1).ok_or_else(|| invalid(format!("missing |u|_{}", k + 1)))?;
                    let est = match pipeline {
                        Pipeline::Classical | Pipeline::ClassicalPrecond => {
                            classical_pipeline_cost(d, k, eps, seminorm, pipeline.is_preconditioned())?
                        }
                        Pipeline::Quantum | Pipeline::QuantumPrecond => {
                            quantum_cost(d, k, eps, sobolev, stencil_sparsity(d), pipeline.is_preconditioned())?
                        }
                    };
                    rows.push(TableRow {
                        pipeline,
                        d,
                        k,
                        eps,
                        exponents: est.exponents_of_inv_eps.clone(),
                        formula: formula(pipeline, d, k),
                        model_value: est.runtime_model,
                        oracle_counts: est.oracle_calls,
                    });
                }
            }
        }
    }
    Ok(rows)
}
