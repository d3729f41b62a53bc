//! Element-by-element assembly of the stiffness matrix, load vector and Gram
//! (mass) matrix, plus the sparse row oracle used by the quantum solver model.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mesh::{barycentric, BasisSpec, Mesh};
use crate::poly::{Field, Polynomial, MAX_DEGREE};
use crate::quadrature::{GaussRule, TriangleRule};
use crate::sparse::CsrMatrix;

/// `a(u, v) = diffusion * int grad u . grad v + reaction * int u v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearForm {
    pub diffusion: f64,
    pub reaction: f64,
}

impl Default for BilinearForm {
    fn default() -> Self {
        Self::poisson()
    }
}

impl BilinearForm {
    pub fn new(diffusion: f64, reaction: f64) -> Result<Self> {
        if !(diffusion > 0.0) || !(reaction >= 0.0) {
            return Err(invalid(format!(
                "need diffusion > 0 and reaction >= 0, got ({diffusion}, {reaction})"
            )));
        }
        Ok(Self { diffusion, reaction })
    }

    pub fn poisson() -> Self {
        Self { diffusion: 1.0, reaction: 0.0 }
    }

    /// Lower bound `c` with `a(u, u) >= c ||u||^2` on the constrained space:
    /// the first Laplace eigenvalue is `(pi/2)^2` on `[0, 1]` with
    /// Dirichlet/Neumann ends and `2 pi^2` on the Dirichlet square.
    pub fn coercivity_constant(&self, dimension: usize) -> f64 {
        let poincare = match dimension {
            1 => std::f64::consts::FRAC_PI_2.powi(2),
            _ => 2.0 * std::f64::consts::PI.powi(2),
        };
        self.diffusion * poincare + self.reaction
    }
}

/// `f_i = int f phi_i` over the free degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadVector {
    pub values: Vec<f64>,
}

impl LoadVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        crate::sparse::norm(&self.values)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i},{v:.17e}\n"));
        }
        s
    }
}

/// Integral of a polynomial over `[0, 1]`, exact up to rounding.
fn integrate_unit(p: &Polynomial) -> f64 {
    p.coeffs.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).sum()
}

/// Reference-element matrices on `[0, 1]`: `(int L_l' L_m', int L_l L_m)`.
fn reference_matrices_1d(shapes: &[Polynomial]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = shapes.len();
    let deriv: Vec<Polynomial> = shapes.iter().map(Polynomial::derivative).collect();
    let mut stiff = vec![vec![0.0; k]; k];
    let mut mass = vec![vec![0.0; k]; k];
    for l in 0..k {
        for m in l..k {
            stiff[l][m] = integrate_unit(&deriv[l].mul(&deriv[m]));
            mass[l][m] = integrate_unit(&shapes[l].mul(&shapes[m]));
            stiff[m][l] = stiff[l][m];
            mass[m][l] = mass[l][m];
        }
    }
    (stiff, mass)
}

/// Local matrix of `diffusion * stiffness + reaction * mass` for every element.
fn element_matrices(mesh: &Mesh, spec: &BasisSpec, diffusion: f64, reaction: f64) -> Vec<Vec<Vec<f64>>> {
    let s2 = spec.scale * spec.scale;
    match spec.dimension {
        1 => {
            let (ks, ms) = reference_matrices_1d(&spec.shapes_1d);
            (0..mesh.element_count())
                .map(|e| {
                    let h = mesh.element_measure(e);
                    ks.iter()
                        .zip(&ms)
                        .map(|(kr, mr)| {
                            kr.iter().zip(mr).map(|(k, m)| s2 * (diffusion * k / h + reaction * h * m)).collect()
                        })
                        .collect()
                })
                .collect()
        }
        _ => {
            let rule = TriangleRule::exact_for(2);
            (0..mesh.element_count())
                .map(|e| {
                    let grads = p1_gradients(mesh, e);
                    let area = mesh.element_measure(e);
                    let mut local = vec![vec![0.0; 3]; 3];
                    for l in 0..3 {
                        for m in l..3 {
                            let g = grads[l][0] * grads[m][0] + grads[l][1] * grads[m][1];
                            // Reference barycentrics are (1 - s - t, s, t).
                            let mass: f64 = rule
                                .points
                                .iter()
                                .zip(&rule.weights)
                                .map(|(p, w)| {
                                    let lam = [1.0 - p[0] - p[1], p[0], p[1]];
                                    w * lam[l] * lam[m]
                                })
                                .sum::<f64>()
                                * 2.0
                                * area;
                            local[l][m] = s2 * (diffusion * area * g + reaction * mass);
                            local[m][l] = local[l][m];
                        }
                    }
                    local
                })
                .collect()
        }
    }
}

/// Gradients of the three barycentric coordinates on triangle `e`.
pub(crate) fn p1_gradients(mesh: &Mesh, e: usize) -> [[f64; 2]; 3] {
    let el = &mesh.elements[e];
    let (a, b, c) = (&mesh.vertices[el[0]], &mesh.vertices[el[1]], &mesh.vertices[el[2]]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
    let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
    [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
}

fn assemble_form(mesh: &Mesh, spec: &BasisSpec, diffusion: f64, reaction: f64) -> Result<CsrMatrix> {
    spec.check_mesh(mesh)?;
    let locals = element_matrices(mesh, spec, diffusion, reaction);
    let mut triplets = Vec::new();
    // Fixed element order makes the accumulation deterministic; only the upper
    // triangle is accumulated and then mirrored so the result is exactly symmetric.
    for (e, local) in locals.iter().enumerate() {
        let nodes = &spec.element_nodes[e];
        for (l, &nl) in nodes.iter().enumerate() {
            let Some(i) = spec.dof_of_node[nl] else { continue };
            for (m, &nm) in nodes.iter().enumerate() {
                let Some(j) = spec.dof_of_node[nm] else { continue };
                if i <= j {
                    triplets.push((i, j, local[l][m]));
                }
            }
        }
    }
    let upper = CsrMatrix::from_triplets(spec.dof_count(), triplets);
    let mirrored = upper.triplets().filter(|(i, j, _)| i != j).map(|(i, j, v)| (j, i, v));
    Ok(CsrMatrix::from_triplets(spec.dof_count(), upper.triplets().chain(mirrored)))
}

/// Stiffness matrix `M_ij = a(phi_i, phi_j)` over the free dofs.
pub fn assemble_stiffness(mesh: &Mesh, spec: &BasisSpec, form: &BilinearForm) -> Result<CsrMatrix> {
    assemble_form(mesh, spec, form.diffusion, form.reaction)
}

/// Gram matrix `W_ij = int phi_i phi_j`.
pub fn assemble_gram(mesh: &Mesh, spec: &BasisSpec) -> Result<CsrMatrix> {
    assemble_form(mesh, spec, 0.0, 1.0)
}

/// Points per element for a load integral: exact for polynomial data up to
/// `MAX_DEGREE`, and a fixed high-order rule for general fields.
fn load_rule_points(spec: &BasisSpec, f: &dyn Field) -> Result<usize> {
    match f.degree() {
        Some(p) if p > MAX_DEGREE => {
            Err(invalid(format!("polynomial degree {p} exceeds supported maximum {MAX_DEGREE}")))
        }
        Some(p) => Ok((2 * spec.degree + p).div_ceil(2) + 1),
        None => Ok(12),
    }
}

/// Load vector `f_i = int f phi_i`.
pub fn assemble_load(mesh: &Mesh, spec: &BasisSpec, f: &dyn Field) -> Result<LoadVector> {
    spec.check_mesh(mesh)?;
    let points = load_rule_points(spec, f)?;
    let mut values = vec![0.0; spec.dof_count()];
    match spec.dimension {
        1 => {
            let rule = GaussRule::new(points);
            for e in 0..mesh.element_count() {
                let x0 = mesh.vertices[mesh.elements[e][0]][0];
                let h = mesh.element_measure(e);
                for (l, &node) in spec.element_nodes[e].iter().enumerate() {
                    let Some(i) = spec.dof_of_node[node] else { continue };
                    let shape = &spec.shapes_1d[l];
                    values[i] += spec.scale * rule.integrate(0.0, 1.0, |t| f.eval(&[x0 + h * t]) * shape.eval(t)) * h;
                }
            }
        }
        _ => {
            let rule = TriangleRule::exact_for(2 * points - 1);
            for e in 0..mesh.element_count() {
                let el = &mesh.elements[e];
                let (a, b, c) = (&mesh.vertices[el[0]], &mesh.vertices[el[1]], &mesh.vertices[el[2]]);
                let jac = 2.0 * mesh.element_measure(e);
                for (l, &node) in spec.element_nodes[e].iter().enumerate() {
                    let Some(i) = spec.dof_of_node[node] else { continue };
                    let mut acc = 0.0;
                    for (p, w) in rule.points.iter().zip(&rule.weights) {
                        let lam = [1.0 - p[0] - p[1], p[0], p[1]];
                        let x = [
                            lam[0] * a[0] + lam[1] * b[0] + lam[2] * c[0],
                            lam[0] * a[1] + lam[1] * b[1] + lam[2] * c[1],
                        ];
                        acc += w * f.eval(&x) * lam[l];
                    }
                    values[i] += spec.scale * acc * jac;
                }
            }
        }
    }
    Ok(LoadVector { values })
}

/// Value of a discrete function `sum_i coeffs_i phi_i` at `x`.
pub fn eval_discrete(mesh: &Mesh, spec: &BasisSpec, coeffs: &[f64], x: &[f64]) -> Result<f64> {
    let e = mesh.locate(x)?;
    Ok(eval_on_element(mesh, spec, coeffs, e, x))
}

pub(crate) fn eval_on_element(mesh: &Mesh, spec: &BasisSpec, coeffs: &[f64], e: usize, x: &[f64]) -> f64 {
    let nodes = &spec.element_nodes[e];
    let vals: Vec<f64> = match spec.dimension {
        1 => {
            let x0 = mesh.vertices[mesh.elements[e][0]][0];
            let t = (x[0] - x0) / mesh.element_measure(e);
            spec.shapes_1d.iter().map(|s| s.eval(t)).collect()
        }
        _ => barycentric(mesh, e, x).to_vec(),
    };
    nodes
        .iter()
        .zip(vals)
        .filter_map(|(&node, v)| spec.dof_of_node[node].map(|i| coeffs[i] * v))
        .sum::<f64>()
        * spec.scale
}

/// Sparse-access oracle: the `i`-th (1-based) nonzero of row `r` as
/// `(column, value)`, or `None` past the end of the row.
pub fn row_oracle(matrix: &CsrMatrix, r: usize, i: usize) -> Option<(usize, f64)> {
    if r >= matrix.n() || i == 0 {
        return None;
    }
    matrix.row(r).nth(i - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_square_triangulation, eval_basis, Normalization};
    use crate::poly::{FnField, Polynomial2};
    use crate::sparse::dense_symmetric_eigenvalues;
    use approx::assert_relative_eq;

    fn poisson_1d(n: usize) -> (Mesh, BasisSpec, CsrMatrix) {
        let mesh = build_interval_mesh(n).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        let m = assemble_stiffness(&mesh, &spec, &BilinearForm::poisson()).unwrap();
        (mesh, spec, m)
    }

    #[test]
    fn tridiagonal_poisson_rows() {
        let (mesh, _, m) = poisson_1d(8);
        let h = mesh.h;
        for r in 0..7 {
            assert_eq!(m.get(r, r), 2.0 / h);
            if r > 0 {
                assert_eq!(m.get(r, r - 1), -1.0 / h);
            }
            assert_eq!(m.get(r, r + 1), -1.0 / h);
        }
        // Neumann end: half tent.
        assert_eq!(m.get(7, 7), 1.0 / h);
        assert_eq!(m.max_row_nnz(), 3);
    }

    #[test]
    fn single_element() {
        let (mesh, _, m) = poisson_1d(1);
        assert_eq!(m.n(), 1);
        assert_eq!(m.get(0, 0), 1.0 / mesh.h);
    }

    #[test]
    fn row_oracle_table() {
        let (mesh, _, m) = poisson_1d(8);
        let h = mesh.h;
        assert_eq!(row_oracle(&m, 2, 1), Some((1, -1.0 / h)));
        assert_eq!(row_oracle(&m, 2, 2), Some((2, 2.0 / h)));
        assert_eq!(row_oracle(&m, 2, 3), Some((3, -1.0 / h)));
        assert_eq!(row_oracle(&m, 2, 4), None);
        assert_eq!(row_oracle(&m, 2, 0), None);
        assert_eq!(row_oracle(&m, 99, 1), None);
    }

    #[test]
    fn load_examples() {
        let mesh = build_interval_mesh(4).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        let ones = assemble_load(&mesh, &spec, &Polynomial::constant(1.0)).unwrap();
        for i in 0..3 {
            assert_relative_eq!(ones.values[i], mesh.h, epsilon = 1e-15);
        }
        assert_relative_eq!(ones.values[3], mesh.h / 2.0, epsilon = 1e-15);
        let zero = assemble_load(&mesh, &spec, &Polynomial::zero()).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let x = assemble_load(&mesh, &spec, &Polynomial::new(vec![0.0, 1.0])).unwrap();
        assert_relative_eq!(x.values[0], 0.0625, epsilon = 1e-15);
        let too_high = Polynomial::new(vec![0.0; 9].into_iter().chain([1.0, 1.0]).collect());
        assert!(assemble_load(&mesh, &spec, &too_high).is_err());
    }

    #[test]
    fn gram_1d_entries() {
        let mesh = build_interval_mesh(6).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        let w = assemble_gram(&mesh, &spec).unwrap();
        let h = mesh.h;
        assert_relative_eq!(w.get(2, 2), 2.0 * h / 3.0, epsilon = 1e-15);
        assert_relative_eq!(w.get(2, 3), h / 6.0, epsilon = 1e-15);
        assert_eq!(w.row_len(2), 3);
        assert!(!w.row(0).any(|(j, _)| j == 2));
    }

    #[test]
    fn gram_2d_diagonal_is_order_h_squared() {
        for n in [4, 8, 16] {
            let mesh = build_square_triangulation(n).unwrap();
            let spec = BasisSpec::with_normalization(&mesh, 1, Normalization::Scaled).unwrap();
            let w = assemble_gram(&mesh, &spec).unwrap();
            // Interior vertex touches 6 triangles of area h^2/4 each: W_ii = h^2/4.
            let h = mesh.h;
            let max_diag = w.diagonal().into_iter().fold(0.0, f64::max);
            assert_relative_eq!(max_diag, h * h / 4.0, epsilon = 1e-14);
        }
    }

    /// Dense oracle: a(phi_i, phi_j) by 64-point composite Gauss quadrature of
    /// the basis functions evaluated through `eval_basis`. Derivatives use a
    /// five-point stencil kept inside the element, exact for quartics.
    fn brute_force_1d(mesh: &Mesh, spec: &BasisSpec, form: &BilinearForm) -> Vec<Vec<f64>> {
        let n = spec.dof_count();
        let rule = GaussRule::new(64);
        let mut out = vec![vec![0.0; n]; n];
        for e in 0..mesh.element_count() {
            let (a, b) = (mesh.vertices[e][0], mesh.vertices[e + 1][0]);
            for i in 0..n {
                for j in 0..n {
                    let val = rule.integrate(a, b, |x| {
                        let d = (x - a).min(b - x) / 2.5;
                        let phi = |k: usize, y: f64| eval_basis(mesh, spec, k, &[y]).unwrap();
                        let dphi = |k: usize| {
                            (phi(k, x - 2.0 * d) - 8.0 * phi(k, x - d) + 8.0 * phi(k, x + d) - phi(k, x + 2.0 * d))
                                / (12.0 * d)
                        };
                        form.diffusion * dphi(i) * dphi(j) + form.reaction * phi(i, x) * phi(j, x)
                    });
                    out[i][j] += val;
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_integration() {
        let form = BilinearForm::new(1.3, 0.7).unwrap();
        for (n, k) in [(5, 1), (4, 2), (3, 3), (32, 1)] {
            let mesh = build_interval_mesh(n).unwrap();
            let spec = BasisSpec::new(&mesh, k).unwrap();
            let m = assemble_stiffness(&mesh, &spec, &form).unwrap();
            let oracle = brute_force_1d(&mesh, &spec, &form);
            for (i, row) in oracle.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((m.get(i, j) - v).abs() < 1e-10, "({i},{j}) {} vs {v}", m.get(i, j));
                }
            }
        }
    }

    #[test]
    fn symmetric_and_psd() {
        for (mesh, k) in [
            (build_interval_mesh(32).unwrap(), 1),
            (build_interval_mesh(16).unwrap(), 3),
            (build_square_triangulation(8).unwrap(), 1),
        ] {
            let spec = BasisSpec::new(&mesh, k).unwrap();
            let m = assemble_stiffness(&mesh, &spec, &BilinearForm::poisson()).unwrap();
            assert!(m.is_symmetric(0.0));
            assert!(dense_symmetric_eigenvalues(&m)[0] >= -1e-12);
        }
    }

    #[test]
    fn load_2d_against_area_formula() {
        let mesh = build_square_triangulation(4).unwrap();
        let spec = BasisSpec::new(&mesh, 1).unwrap();
        // int phi_i = (support area) / 3 = 6 * (1/32) / 3 = 1/16.
        let load = assemble_load(&mesh, &spec, &Polynomial2::constant(1.0)).unwrap();
        for v in &load.values {
            assert_relative_eq!(*v, 1.0 / 16.0, epsilon = 1e-15);
        }
        let smooth = assemble_load(&mesh, &spec, &FnField(|x: &[f64]| x[0] + x[1])).unwrap();
        let poly = assemble_load(&mesh, &spec, &Polynomial2::new(vec![vec![0.0, 1.0], vec![1.0]])).unwrap();
        for (a, b) in smooth.values.iter().zip(&poly.values) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn mismatched_basis_rejected() {
        let a = build_interval_mesh(4).unwrap();
        let b = build_interval_mesh(5).unwrap();
        let spec = BasisSpec::new(&a, 1).unwrap();
        assert!(assemble_stiffness(&b, &spec, &BilinearForm::poisson()).is_err());
        assert!(assemble_gram(&b, &spec).is_err());
    }

    #[test]
    fn invalid_forms() {
        assert!(BilinearForm::new(0.0, 1.0).is_err());
        assert!(BilinearForm::new(1.0, -1.0).is_err());
        assert!(BilinearForm::new(f64::NAN, 0.0).is_err());
    }
}
