//! Subcommand implementations. Each returns an [`Artifact`]; emission and
//! metadata are handled by the caller.

use std::f64::consts::SQRT_2;

use femq::budget::SobolevData;
use femq::convergence::{convergence_study, fit_loglog_slope, stiffness_condition_number};
use femq::lower_bounds::{
    bump_h1_seminorm, hybrid_experiment, oracle_search_demo, BlackBoxPair, BumpOracle, ScanStrategy,
};
use femq::problem::ProblemSpec;
use femq::quantum::{estimate_functional, SampleBudget};
use femq::resources::complexity_table;
use femq::solver::conjugate_gradient;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{Artifact, Table};

fn fmt(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct SolveReport {
    n: usize,
    h: f64,
    dofs: usize,
    eps_d: f64,
    cg_tolerance: f64,
    functional: f64,
    cg_iterations: usize,
    matvec_count: usize,
    final_energy_error_estimate: f64,
    kappa: f64,
    solution: Vec<f64>,
}

pub fn solve(spec: &ProblemSpec) -> Result<Artifact, CliError> {
    let plan = spec.plan()?;
    let disc = spec.discretize(plan.mesh.n)?;
    let report = conjugate_gradient(&disc.matrix, &disc.rhs, plan.eps_cg, None, None)?;
    let functional = disc.functional(&report.solution, &spec.r)?;
    let kappa = stiffness_condition_number(&disc.matrix)?;
    let result = SolveReport {
        n: plan.mesh.n,
        h: disc.mesh.h,
        dofs: disc.spec.dof_count(),
        eps_d: plan.eps_d,
        cg_tolerance: plan.eps_cg,
        functional,
        cg_iterations: report.iterations,
        matvec_count: report.matvec_count,
        final_energy_error_estimate: report.final_energy_error_estimate,
        kappa,
        solution: report.solution,
    };
    Ok(Artifact::report(result))
}

pub fn plan(spec: &ProblemSpec) -> Result<Artifact, CliError> {
    Ok(Artifact::report(spec.plan()?))
}

pub fn convergence(spec: &ProblemSpec, levels: usize, base: Option<usize>) -> Result<Artifact, CliError> {
    if levels < 3 {
        return Err(CliError::Validation(format!("convergence needs at least 3 levels, got {levels}")));
    }
    spec.validate_assembled()?;
    let base = base.unwrap_or(if spec.d == 1 { 8 } else { 4 });
    if base == 0 {
        return Err(CliError::Validation("base mesh must have at least one element".into()));
    }
    let sizes: Vec<usize> = (0..levels).map(|i| base << i).collect();
    let study = convergence_study(spec.d, spec.k, &spec.pde, &spec.f, None, &sizes)?;
    let rows = study
        .levels
        .iter()
        .map(|l| vec![l.n.to_string(), fmt(l.h), l.dofs.to_string(), fmt(l.l2_error), l.cg_iterations.to_string()])
        .collect();
    let table = Table { columns: vec!["n", "h", "dofs", "l2_error", "cg_iterations"], rows };
    let slope = study.slope;
    Ok(Artifact::table(study, table).with_note("slope", slope))
}

pub fn simulate(spec: &ProblemSpec, seed: u64, exact: bool, shots: Option<u64>) -> Result<Artifact, CliError> {
    let mut budget = match (exact, shots) {
        (true, _) => SampleBudget::exact(seed),
        (false, Some(n)) => SampleBudget::new(n, seed),
        (false, None) => SampleBudget::unlimited(seed),
    };
    Ok(Artifact::report(estimate_functional(spec, spec.eps, &mut budget)?))
}

pub fn resources(
    spec: Option<&ProblemSpec>,
    dims: &[usize],
    degrees: &[usize],
    eps_values: &[f64],
) -> Result<Artifact, CliError> {
    if dims.is_empty() || degrees.is_empty() || eps_values.is_empty() {
        return Err(CliError::Validation("dims, degrees and eps lists must be nonempty".into()));
    }
    let top = degrees.iter().max().copied().unwrap_or(1) + 1;
    // Model values use unit Sobolev data unless a problem supplies its own.
    let sobolev = match spec {
        Some(s) => s.sobolev_data()?,
        None => SobolevData::new(vec![1.0; top + 1])?,
    };
    let rows = complexity_table(dims, degrees, eps_values, &sobolev)?;
    let table_rows = rows
        .iter()
        .map(|r| {
            vec![
                r.pipeline.name().to_string(),
                r.d.to_string(),
                r.k.to_string(),
                fmt(r.eps),
                r.exponents.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(";"),
                r.formula.clone(),
                fmt(r.model_value),
                r.oracle_counts.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
            ]
        })
        .collect();
    let table = Table {
        columns: vec!["pipeline", "d", "k", "eps", "exponent", "formula", "model_value", "oracle_counts"],
        rows: table_rows,
    };
    Ok(Artifact::table(rows, table))
}

#[derive(Serialize)]
struct HybridRow {
    uses: usize,
    separation: f64,
    draws: u64,
    max_exact_advantage: f64,
    mean_empirical_advantage: f64,
    bound_advantage: f64,
    violations: usize,
}

pub struct HybridParams<'a> {
    pub qubits: usize,
    pub uses: &'a [usize],
    pub separations: &'a [f64],
    pub draws: u64,
    pub trials: u64,
}

pub fn hybrid(params: &HybridParams, seed: u64) -> Result<Artifact, CliError> {
    let mut rows = Vec::new();
    for &uses in params.uses {
        for &separation in params.separations {
            let (mut max_adv, mut emp, mut violations) = (0.0f64, 0.0, 0);
            let mut bound = 0.0;
            for draw in 0..params.draws {
                let draw_seed = seed ^ (draw << 20) ^ ((uses as u64) << 40) ^ separation.to_bits().rotate_left(7);
                let pair = BlackBoxPair::random(params.qubits, separation, uses, draw_seed)?;
                let out = hybrid_experiment(&pair, params.trials, draw_seed)?;
                max_adv = max_adv.max(out.advantage);
                emp += out.empirical_probability - 0.5;
                violations += (out.exact_probability > out.bound + 1e-12) as usize;
                bound = out.bound - 0.5;
            }
            rows.push(HybridRow {
                uses,
                separation,
                draws: params.draws,
                max_exact_advantage: max_adv,
                mean_empirical_advantage: emp / params.draws.max(1) as f64,
                bound_advantage: if params.draws > 0 { bound } else { uses as f64 * separation / SQRT_2 },
                violations,
            });
        }
    }
    let table = Table {
        columns: vec!["T", "eps_sep", "draws", "exact_advantage", "empirical_advantage", "bound", "violations"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.uses.to_string(),
                    fmt(r.separation),
                    r.draws.to_string(),
                    fmt(r.max_exact_advantage),
                    fmt(r.mean_empirical_advantage),
                    fmt(r.bound_advantage),
                    r.violations.to_string(),
                ]
            })
            .collect(),
    };
    Ok(Artifact::table(rows, table))
}

#[derive(Serialize)]
struct BumpRow {
    n: usize,
    mean_queries: f64,
    misclassified: usize,
    h1_seminorm: f64,
}

/// Scans every marked position for each `N` and reports the mean query count.
pub fn bump(sizes: &[usize]) -> Result<Artifact, CliError> {
    let mut rows = Vec::new();
    for &n in sizes {
        if n < 2 {
            return Err(CliError::Validation(format!("bump demo needs N >= 2, got {n}")));
        }
        let (mut total, mut wrong) = (0u64, 0);
        for marked in 0..n {
            let oracle = BumpOracle::new(n, marked)?;
            let out = oracle_search_demo(&oracle, ScanStrategy::DeterministicScan, 0);
            total += out.queries;
            wrong += (out.left_half != (marked < n / 2)) as usize;
        }
        rows.push(BumpRow { n, mean_queries: total as f64 / n as f64, misclassified: wrong, h1_seminorm: bump_h1_seminorm(n) });
    }
    let slope = if rows.len() >= 2 {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let qs: Vec<f64> = rows.iter().map(|r| r.mean_queries).collect();
        Some(fit_loglog_slope(&ns, &qs)?)
    } else {
        None
    };
    let table = Table {
        columns: vec!["N", "mean_queries", "misclassified", "h1_seminorm"],
        rows: rows
            .iter()
            .map(|r| vec![r.n.to_string(), fmt(r.mean_queries), r.misclassified.to_string(), fmt(r.h1_seminorm)])
            .collect(),
    };
    let mut artifact = Artifact::table(serde_json::json!({ "rows": rows, "query_slope": slope }), table);
    if let Some(s) = slope {
        artifact = artifact.with_note("query_slope", s);
    }
    Ok(artifact)
}
