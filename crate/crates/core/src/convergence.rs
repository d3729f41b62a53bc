//! Mesh-refinement studies: `L2` error of the discrete solution, condition
//! number growth, and CG iteration counts, each with a fitted log-log slope.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load, assemble_stiffness, eval_discrete, eval_on_element, BilinearForm};
use crate::error::{invalid, Result};
use crate::mesh::{build_interval_mesh, build_square_triangulation, BasisSpec, Mesh};
use crate::poly::Field;
use crate::quadrature::{GaussRule, TriangleRule};
use crate::solver::{conjugate_gradient, estimate_condition_number};
use crate::sparse::{dense_condition_number, CsrMatrix};

/// Matrices up to this size get a dense eigensolve; larger ones are iterated.
const DENSE_KAPPA_LIMIT: usize = 512;

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("a slope fit needs at least two paired samples"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("log-log fit needs positive finite samples"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs at least two distinct abscissae"));
    }
    Ok(sxy / sxx)
}

/// A discretised boundary value problem at one refinement level.
struct Level {
    mesh: Mesh,
    spec: BasisSpec,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
}

fn discretise(d: usize, k: usize, n: usize, form: &BilinearForm, f: &dyn Field) -> Result<Level> {
    let mesh = match d {
        1 => build_interval_mesh(n)?,
        2 => build_square_triangulation(n)?,
        _ => return Err(invalid(format!("refinement studies need d in {{1, 2}}, got {d}"))),
    };
    let spec = BasisSpec::new(&mesh, k)?;
    let matrix = assemble_stiffness(&mesh, &spec, form)?;
    let rhs = assemble_load(&mesh, &spec, f)?.values.into_iter().map(|v| -v).collect();
    Ok(Level { mesh, spec, matrix, rhs })
}

/// `||g||_{L2}` integrated elementwise, exact on each element up to the rule's order.
fn integrate_sq(mesh: &Mesh, g: impl Fn(usize, &[f64]) -> f64) -> f64 {
    let mut total = 0.0;
    match mesh.dimension {
        1 => {
            let rule = GaussRule::new(10);
            for e in 0..mesh.element_count() {
                let x0 = mesh.vertices[mesh.elements[e][0]][0];
                let x1 = mesh.vertices[mesh.elements[e][1]][0];
                total += rule.integrate(x0, x1, |x| g(e, &[x]).powi(2));
            }
        }
        _ => {
            let rule = TriangleRule::exact_for(8);
            for e in 0..mesh.element_count() {
                let el = &mesh.elements[e];
                let (a, b, c) = (&mesh.vertices[el[0]], &mesh.vertices[el[1]], &mesh.vertices[el[2]]);
                let jac = 2.0 * mesh.element_measure(e);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let x = [
                        a[0] + p[0] * (b[0] - a[0]) + p[1] * (c[0] - a[0]),
                        a[1] + p[0] * (b[1] - a[1]) + p[1] * (c[1] - a[1]),
                    ];
                    total += w * jac * g(e, &x).powi(2);
                }
            }
        }
    }
    total.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    pub n: usize,
    pub h: f64,
    pub dofs: usize,
    pub l2_error: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub d: usize,
    pub k: usize,
    pub levels: Vec<ConvergenceLevel>,
    /// Slope of `ln ||u - u~||` against `ln h`.
    pub slope: f64,
    /// Whether errors were measured against an analytic solution or a fine reference.
    pub reference: ErrorReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    Analytic,
    /// Discrete solution on a mesh four times finer than the finest level.
    FineMesh,
}

/// Solves on each mesh in `sizes` and measures `||u - u~||`. Without an
/// analytic `exact`, the reference is the solution on a mesh four times finer
/// than the finest level, at the highest degree available in `d`.
pub fn convergence_study(
    d: usize,
    k: usize,
    form: &BilinearForm,
    f: &dyn Field,
    exact: Option<&dyn Field>,
    sizes: &[usize],
) -> Result<ConvergenceStudy> {
    if sizes.len() < 3 {
        return Err(invalid(format!("a convergence study needs at least 3 levels, got {}", sizes.len())));
    }
    let reference = match exact {
        Some(_) => None,
        None => {
            let finest = *sizes.iter().max().expect("sizes is nonempty");
            let k_ref = if d == 1 { 3 } else { 1 };
            let level = discretise(d, k_ref, 4 * finest, form, f)?;
            let u = conjugate_gradient(&level.matrix, &level.rhs, 1e-13, None, None)?.solution;
            Some((level, u))
        }
    };
    let mut levels = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let level = discretise(d, k, n, form, f)?;
        let report = conjugate_gradient(&level.matrix, &level.rhs, 1e-13, None, None)?;
        let u = &report.solution;
        let l2_error = integrate_sq(&level.mesh, |e, x| {
            let uh = eval_on_element(&level.mesh, &level.spec, u, e, x);
            let target = match (&exact, &reference) {
                (Some(g), _) => g.eval(x),
                (None, Some((r, ur))) => eval_discrete(&r.mesh, &r.spec, ur, x).unwrap_or(0.0),
                (None, None) => unreachable!("a reference is built whenever no exact solution is given"),
            };
            uh - target
        });
        levels.push(ConvergenceLevel {
            n,
            h: level.mesh.h,
            dofs: level.spec.dof_count(),
            l2_error,
            cg_iterations: report.iterations,
        });
    }
    let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let errs: Vec<f64> = levels.iter().map(|l| l.l2_error).collect();
    Ok(ConvergenceStudy {
        d,
        k,
        slope: fit_loglog_slope(&hs, &errs)?,
        levels,
        reference: if exact.is_some() { ErrorReference::Analytic } else { ErrorReference::FineMesh },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub dofs: usize,
    pub kappa: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub d: usize,
    pub k: usize,
    pub points: Vec<ScalingPoint>,
    /// Slope of `ln kappa` against `ln N`.
    pub kappa_slope: f64,
    /// Slope of `ln iterations` against `ln kappa`.
    pub iteration_slope: f64,
}

/// Condition number of an SPD stiffness matrix: dense when small, iterated otherwise.
pub fn stiffness_condition_number(m: &CsrMatrix) -> Result<f64> {
    if m.n() <= DENSE_KAPPA_LIMIT {
        dense_condition_number(m)
    } else {
        Ok(estimate_condition_number(m, 1e-10)?.kappa)
    }
}

/// Measures `kappa(M)` and the unpreconditioned CG iteration count at `tol`
/// on each mesh in `sizes`.
pub fn scaling_study(
    d: usize,
    k: usize,
    form: &BilinearForm,
    f: &dyn Field,
    sizes: &[usize],
    tol: f64,
) -> Result<ScalingStudy> {
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let level = discretise(d, k, n, form, f)?;
        let kappa = stiffness_condition_number(&level.matrix)?;
        let report = conjugate_gradient(&level.matrix, &level.rhs, tol, None, None)?;
        points.push(ScalingPoint { n, dofs: level.spec.dof_count(), kappa, cg_iterations: report.iterations });
    }
    let dofs: Vec<f64> = points.iter().map(|p| p.dofs as f64).collect();
    let kappas: Vec<f64> = points.iter().map(|p| p.kappa).collect();
    let iterations: Vec<f64> = points.iter().map(|p| p.cg_iterations as f64).collect();
    Ok(ScalingStudy {
        d,
        k,
        kappa_slope: fit_loglog_slope(&dofs, &kappas)?,
        iteration_slope: fit_loglog_slope(&kappas, &iterations)?,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{FnField, Polynomial};
    use std::f64::consts::PI;

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((fit_loglog_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 2.0], &[0.0, 2.0]).is_err());
    }

    #[test]
    fn linear_elements_converge_quadratically() {
        let f = Polynomial::constant(-1.0);
        let exact = FnField(|x: &[f64]| x[0] - 0.5 * x[0] * x[0]);
        let study =
            convergence_study(1, 1, &BilinearForm::poisson(), &f, Some(&exact), &[16, 32, 64, 128]).unwrap();
        assert!((study.slope - 2.0).abs() < 0.05, "{}", study.slope);
        assert_eq!(study.reference, ErrorReference::Analytic);
    }

    #[test]
    fn fine_mesh_reference_agrees_with_analytic() {
        let f = Polynomial::constant(-1.0);
        let study = convergence_study(1, 1, &BilinearForm::poisson(), &f, None, &[8, 16, 32]).unwrap();
        assert!((study.slope - 2.0).abs() < 0.1, "{}", study.slope);
        assert_eq!(study.reference, ErrorReference::FineMesh);
    }

    #[test]
    fn two_dimensional_manufactured_solution() {
        let f = FnField(|x: &[f64]| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin());
        let exact = FnField(|x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin());
        let study = convergence_study(2, 1, &BilinearForm::poisson(), &f, Some(&exact), &[4, 8, 16]).unwrap();
        assert!((study.slope - 2.0).abs() < 0.15, "{}", study.slope);
    }

    #[test]
    fn too_few_levels_rejected() {
        let f = Polynomial::constant(-1.0);
        assert!(convergence_study(1, 1, &BilinearForm::poisson(), &f, None, &[8, 16]).is_err());
    }

    #[test]
    fn one_dimensional_kappa_grows_quadratically() {
        let f = Polynomial::constant(-1.0);
        let study = scaling_study(1, 1, &BilinearForm::poisson(), &f, &[16, 32, 64], 1e-8).unwrap();
        assert!((study.kappa_slope - 2.0).abs() < 0.1, "{}", study.kappa_slope);
    }
}
