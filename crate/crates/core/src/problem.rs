//! Problem descriptions: PDE coefficients, data `f`, functional weight `r`,
//! target accuracy and optional Sobolev data, plus their discretization.
//!
//! The PDE is `diffusion * u'' - reaction * u = f` (Laplacian in 2D), with
//! `u(0) = 0, u'(1) = 0` in 1D and `u = 0` on the boundary of the unit square.
//! Its weak form gives `M u~ = -f~` with `M = diffusion * K + reaction * W`.

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load, assemble_stiffness, BilinearForm, LoadVector};
use crate::budget::{choose_mesh_size, discretisation_share, measure_sobolev, plan_mesh, MeshPlan, SobolevData};
use crate::error::{invalid, FemError, Result};
use crate::mesh::{build_interval_mesh, build_square_triangulation, BasisSpec, Mesh, Normalization};
use crate::poly::{Field, FnField, Polynomial, Polynomial2};
use crate::quadrature::{integrate_unit_cube, GaussRule};
use crate::solver::{conjugate_gradient, CgReport};
use crate::sparse::{dot, CsrMatrix};

/// Default cap on the number of degrees of freedom of assembled runs.
pub const DEFAULT_MAX_DOFS: usize = 1 << 14;

/// Mesh-size calibration constant used when planning from the budget.
pub const MESH_CALIBRATION: f64 = 1.0;

/// Mesh chosen so the discretisation error stays within its budget share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationPlan {
    pub sobolev: SobolevData,
    /// Allowed `||u - u_h||`.
    pub eps_d: f64,
    /// Relative energy-norm tolerance for CG, `eps / (3 ||u||_1)`.
    pub eps_cg: f64,
    pub mesh: MeshPlan,
}

/// Polynomial data in one or two variables; a flat coefficient list is
/// univariate, a nested one bivariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolyData {
    Univariate(Polynomial),
    Bivariate(Polynomial2),
}

impl PolyData {
    pub fn dimension(&self) -> usize {
        match self {
            PolyData::Univariate(_) => 1,
            PolyData::Bivariate(_) => 2,
        }
    }
}

impl Field for PolyData {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PolyData::Univariate(p) => p.eval(x[0]),
            PolyData::Bivariate(p) => p.eval(x[0], x[1]),
        }
    }

    fn degree(&self) -> Option<usize> {
        match self {
            PolyData::Univariate(p) => Some(p.degree()),
            PolyData::Bivariate(p) => Some(p.total_degree()),
        }
    }
}

fn default_max_dofs() -> usize {
    DEFAULT_MAX_DOFS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub pde: BilinearForm,
    pub f: PolyData,
    pub r: PolyData,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sobolev: Option<SobolevData>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_dofs")]
    pub max_dofs: usize,
}

impl ProblemSpec {
    /// 1D problem with default PDE coefficients.
    pub fn poisson_1d(k: usize, f: Polynomial, r: Polynomial, eps: f64) -> Self {
        Self {
            d: 1,
            k,
            pde: BilinearForm::poisson(),
            f: PolyData::Univariate(f),
            r: PolyData::Univariate(r),
            eps,
            sobolev: None,
            seed: 0,
            max_dofs: DEFAULT_MAX_DOFS,
        }
    }

    pub fn poisson_2d(f: Polynomial2, r: Polynomial2, eps: f64) -> Self {
        Self {
            d: 2,
            k: 1,
            pde: BilinearForm::poisson(),
            f: PolyData::Bivariate(f),
            r: PolyData::Bivariate(r),
            eps,
            sobolev: None,
            seed: 0,
            max_dofs: DEFAULT_MAX_DOFS,
        }
    }

    /// Parses and validates; syntax errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| invalid(format!("malformed problem spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem spec serializes")
    }

    /// Checks that hold for every run, including resource-model-only ones.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(invalid(format!("eps must be positive and finite, got {}", self.eps)));
        }
        if !(1..=8).contains(&self.d) {
            return Err(invalid(format!("d must lie in 1..=8, got {}", self.d)));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        BilinearForm::new(self.pde.diffusion, self.pde.reaction)?;
        if let Some(s) = &self.sobolev {
            s.clone().validated()?;
        }
        Ok(())
    }

    /// Additional checks for runs that assemble a discretization.
    pub fn validate_assembled(&self) -> Result<()> {
        self.validate()?;
        match (self.d, self.k) {
            (1, 1..=3) | (2, 1) => {}
            (d, k) => {
                return Err(FemError::Unsupported(format!("assembled runs support d = 1 with k <= 3 and d = 2 with k = 1, got d = {d}, k = {k}")))
            }
        }
        for (name, data) in [("f", &self.f), ("r", &self.r)] {
            if data.dimension() != self.d {
                return Err(invalid(format!("{name} is {}-variate but d = {}", data.dimension(), self.d)));
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self, n: usize) -> Result<Mesh> {
        match self.d {
            1 => build_interval_mesh(n),
            2 => build_square_triangulation(n),
            d => Err(FemError::Unsupported(format!("no mesh builder for d = {d}"))),
        }
    }

    pub fn discretize(&self, n: usize) -> Result<Discretization> {
        self.discretize_with(n, self.k, Normalization::UnitPeak)
    }

    pub fn discretize_with(&self, n: usize, k: usize, normalization: Normalization) -> Result<Discretization> {
        self.validate_assembled()?;
        let mesh = self.build_mesh(n)?;
        let spec = BasisSpec::with_normalization(&mesh, k, normalization)?;
        let matrix = assemble_stiffness(&mesh, &spec, &self.pde)?;
        let load = assemble_load(&mesh, &spec, &self.f)?;
        let rhs = load.values.iter().map(|v| -v).collect();
        Ok(Discretization { mesh, spec, matrix, load, rhs })
    }

    /// Picks the mesh from the discretisation share of `eps`. A vanishing
    /// `|u|_{k+1}` means the solution lies in the discrete space, so the
    /// coarsest mesh suffices.
    pub fn plan(&self) -> Result<DiscretizationPlan> {
        self.validate_assembled()?;
        let sobolev = self.sobolev_data()?;
        // The closed split assumes eps <= ||u||; beyond that only a classical solve makes sense.
        let eps_d = if self.eps <= sobolev.l2_norm {
            discretisation_share(self.eps, sobolev.l2_norm)
        } else {
            self.eps / 3.0
        };
        let seminorm = sobolev
            .seminorm(self.k + 1)
            .ok_or_else(|| invalid(format!("Sobolev data lacks |u|_{}", self.k + 1)))?;
        let target_h = if seminorm > 0.0 { choose_mesh_size(eps_d, seminorm, self.k, MESH_CALIBRATION)? } else { 1.0 };
        let mesh = plan_mesh(target_h, self.d, self.k, self.max_dofs)?;
        let eps_cg = (self.eps / (3.0 * sobolev.sobolev_1_norm.max(f64::MIN_POSITIVE))).min(0.1);
        Ok(DiscretizationPlan { sobolev, eps_d, eps_cg, mesh })
    }

    /// Sobolev data from the overrides, else from a reference solve.
    pub fn sobolev_data(&self) -> Result<SobolevData> {
        match &self.sobolev {
            Some(s) => s.clone().validated(),
            None => self.reference_sobolev(),
        }
    }

    /// `|u|_0 ..= |u|_{k+1}` of the exact solution. Orders 0 and 1 come from a
    /// fine reference solve; higher orders from the PDE identity
    /// `u^{(m+2)} = (f^{(m)} + reaction u^{(m)}) / diffusion`.
    pub fn reference_sobolev(&self) -> Result<SobolevData> {
        self.validate_assembled()?;
        let (a, c) = (self.pde.diffusion, self.pde.reaction);
        let top = self.k + 1;
        match &self.f {
            PolyData::Univariate(f) => {
                let n = 64;
                let disc = self.discretize_with(n, 3, Normalization::UnitPeak)?;
                let u = disc.solve(1e-12)?.solution;
                let spec = &disc.spec;
                let shapes: Vec<Vec<Polynomial>> =
                    (0..=1).map(|m| spec.shapes_1d.iter().map(|s| s.nth_derivative(m)).collect()).collect();
                let discrete = |m: usize, x: f64| -> f64 {
                    let e = ((x * n as f64).floor() as usize).min(n - 1);
                    let t = x * n as f64 - e as f64;
                    spec.element_nodes[e]
                        .iter()
                        .zip(&shapes[m])
                        .map(|(&node, s)| spec.dof_of_node[node].map_or(0.0, |i| u[i]) * s.eval(t))
                        .sum::<f64>()
                        * (n as f64).powi(m as i32)
                };
                fn derivative(m: usize, x: f64, f: &Polynomial, a: f64, c: f64, base: &dyn Fn(usize, f64) -> f64) -> f64 {
                    if m < 2 {
                        base(m, x)
                    } else {
                        (f.nth_derivative(m - 2).eval(x) + c * derivative(m - 2, x, f, a, c, base)) / a
                    }
                }
                let rule = GaussRule::new(8);
                let mut seminorms = Vec::with_capacity(top + 1);
                for m in 0..=top {
                    let mut total = 0.0;
                    for e in 0..n {
                        let (lo, hi) = (e as f64 / n as f64, (e + 1) as f64 / n as f64);
                        total += rule.integrate(lo, hi, |x| derivative(m, x, f, a, c, &discrete).powi(2));
                    }
                    seminorms.push(total.sqrt());
                }
                SobolevData::new(seminorms)
            }
            PolyData::Bivariate(f) => {
                let n = 64;
                let disc = self.discretize(n)?;
                let u = disc.solve(1e-10)?.solution;
                let mut seminorms = vec![
                    measure_sobolev(&disc.mesh, &disc.spec, &u, 0)?,
                    measure_sobolev(&disc.mesh, &disc.spec, &u, 1)?,
                ];
                // |u|_2 = ||Laplacian u|| for H^2 functions vanishing on a convex boundary.
                let lap = FnField(|x: &[f64]| {
                    let uh = crate::assembly::eval_discrete(&disc.mesh, &disc.spec, &u, x).unwrap_or(0.0);
                    (f.eval(x[0], x[1]) + c * uh) / a
                });
                seminorms.push(integrate_unit_cube(&lap, 2, n, |v| v * v).sqrt());
                SobolevData::new(seminorms)
            }
        }
    }
}

/// Assembled system for one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub spec: BasisSpec,
    pub matrix: CsrMatrix,
    /// `f~`.
    pub load: LoadVector,
    /// `-f~`, the right-hand side of `M u~ = -f~`.
    pub rhs: Vec<f64>,
}

impl Discretization {
    pub fn solve(&self, tol: f64) -> Result<CgReport> {
        conjugate_gradient(&self.matrix, &self.rhs, tol, None, None)
    }

    /// `sum_i coeffs_i <phi_i, r>`.
    pub fn functional(&self, coeffs: &[f64], r: &dyn Field) -> Result<f64> {
        let weights = assemble_load(&self.mesh, &self.spec, r)?;
        if coeffs.len() != weights.len() {
            return Err(invalid(format!("{} coefficients for {} dofs", coeffs.len(), weights.len())));
        }
        Ok(dot(coeffs, &weights.values))
    }
}
