//! Uniform meshes of the unit interval and unit square, and the Lagrange
//! bases built on them.
//!
//! 1D meshes carry a homogeneous Dirichlet condition at `x = 0` and a natural
//! (Neumann) condition at `x = 1`; 2D meshes are Dirichlet on all four sides.
//! Dirichlet nodes carry no degree of freedom.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::poly::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryFlag {
    Interior,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub dimension: usize,
    /// Elements per side.
    pub n: usize,
    pub vertices: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    pub boundary_flags: Vec<BoundaryFlag>,
    /// Greatest edge length.
    pub h: f64,
}

pub fn build_interval_mesh(n_elements: usize) -> Result<Mesh> {
    if n_elements == 0 {
        return Err(invalid("interval mesh needs at least one element"));
    }
    let n = n_elements;
    let vertices = (0..=n).map(|i| vec![i as f64 / n as f64]).collect();
    let elements = (0..n).map(|e| vec![e, e + 1]).collect();
    let mut boundary_flags = vec![BoundaryFlag::Interior; n + 1];
    boundary_flags[0] = BoundaryFlag::Dirichlet;
    boundary_flags[n] = BoundaryFlag::Neumann;
    Ok(Mesh {
        dimension: 1,
        n,
        vertices,
        elements,
        boundary_flags,
        h: 1.0 / n as f64,
    })
}

/// Splits each of the `n x n` cells of the unit square along its `(0,0)-(1,1)`
/// diagonal. Vertex `(i, j)` has index `j (n + 1) + i`; cell `(i, j)` owns
/// triangles `2 (j n + i)` (below the diagonal) and `2 (j n + i) + 1`.
pub fn build_square_triangulation(n_per_side: usize) -> Result<Mesh> {
    if n_per_side == 0 {
        return Err(invalid("square triangulation needs at least one cell per side"));
    }
    let n = n_per_side;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary_flags = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(vec![i as f64 / n as f64, j as f64 / n as f64]);
            let on_boundary = i == 0 || j == 0 || i == n || j == n;
            boundary_flags.push(if on_boundary {
                BoundaryFlag::Dirichlet
            } else {
                BoundaryFlag::Interior
            });
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            elements.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            elements.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Ok(Mesh {
        dimension: 2,
        n,
        vertices,
        elements,
        boundary_flags,
        h: std::f64::consts::SQRT_2 / n as f64,
    })
}

impl Mesh {
    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Longest edge over all elements, computed from the coordinates.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for el in &self.elements {
            for a in 0..el.len() {
                for b in a + 1..el.len() {
                    let d: f64 = self.vertices[el[a]]
                        .iter()
                        .zip(&self.vertices[el[b]])
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum();
                    h = h.max(d.sqrt());
                }
            }
        }
        h
    }

    /// Measure (length or area) of an element.
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = &self.elements[e];
        match self.dimension {
            1 => self.vertices[el[1]][0] - self.vertices[el[0]][0],
            _ => {
                let (a, b, c) = (&self.vertices[el[0]], &self.vertices[el[1]], &self.vertices[el[2]]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
            }
        }
    }

    /// Elements sharing at least one vertex with `element`, sorted.
    pub fn neighbors(&self, element: usize) -> Result<Vec<usize>> {
        if element >= self.elements.len() {
            return Err(invalid(format!(
                "element {element} out of range (mesh has {})",
                self.elements.len()
            )));
        }
        let own = &self.elements[element];
        let mut out: Vec<usize> = match self.dimension {
            1 => {
                let mut v = Vec::with_capacity(2);
                if element > 0 {
                    v.push(element - 1);
                }
                if element + 1 < self.elements.len() {
                    v.push(element + 1);
                }
                v
            }
            _ => {
                // Candidates come from the (up to 3x3) block of cells around this one.
                let n = self.n as isize;
                let cell = (element / 2) as isize;
                let (ci, cj) = (cell % n, cell / n);
                let mut v = Vec::new();
                for dj in -1..=1 {
                    for di in -1..=1 {
                        let (i, j) = (ci + di, cj + dj);
                        if i < 0 || j < 0 || i >= n || j >= n {
                            continue;
                        }
                        for t in 0..2 {
                            let e = (2 * (j * n + i) + t) as usize;
                            if e != element && self.elements[e].iter().any(|x| own.contains(x)) {
                                v.push(e);
                            }
                        }
                    }
                }
                v
            }
        };
        out.sort_unstable();
        Ok(out)
    }

    /// Index of an element containing `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dimension || x.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(invalid(format!("point {x:?} outside the unit domain")));
        }
        let n = self.n;
        let cell_of = |c: f64| ((c * n as f64).floor() as usize).min(n - 1);
        match self.dimension {
            1 => Ok(cell_of(x[0])),
            _ => {
                let (i, j) = (cell_of(x[0]), cell_of(x[1]));
                let (lx, ly) = (x[0] * n as f64 - i as f64, x[1] * n as f64 - j as f64);
                let lower = if lx >= ly { 0 } else { 1 };
                Ok(2 * (j * n + i) + lower)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }
}

/// Scaling convention for basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Nodal basis with unit peak.
    #[default]
    UnitPeak,
    /// Nodal basis multiplied by `h^{(2-d)/2}`, so that coefficient sums over an
    /// element scale like `h^{d-2}` times the sup norm. Identical to
    /// `UnitPeak` for `d = 2`.
    Scaled,
}

/// Lagrange basis of degree `k` on a uniform mesh.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    pub dimension: usize,
    pub mesh_n: usize,
    pub degree: usize,
    pub normalization: Normalization,
    /// Multiplier applied to every nodal shape function.
    pub scale: f64,
    /// Nodes of each element in local order.
    pub element_nodes: Vec<Vec<usize>>,
    pub node_coords: Vec<Vec<f64>>,
    pub dof_of_node: Vec<Option<usize>>,
    pub node_of_dof: Vec<usize>,
    /// Elements on which each dof is supported.
    pub support_map: Vec<Vec<usize>>,
    /// Reference shape functions on `[0, 1]` (1D only).
    pub shapes_1d: Vec<Polynomial>,
}

impl BasisSpec {
    pub fn new(mesh: &Mesh, degree: usize) -> Result<Self> {
        Self::with_normalization(mesh, degree, Normalization::UnitPeak)
    }

    pub fn with_normalization(mesh: &Mesh, degree: usize, normalization: Normalization) -> Result<Self> {
        match (mesh.dimension, degree) {
            (1, 1..=3) | (2, 1) => {}
            (d, k) => return Err(invalid(format!("degree {k} not supported in dimension {d}"))),
        }
        let scale = match normalization {
            Normalization::UnitPeak => 1.0,
            Normalization::Scaled => mesh.h.powf((2.0 - mesh.dimension as f64) / 2.0),
        };
        let (element_nodes, node_coords, dirichlet): (Vec<Vec<usize>>, Vec<Vec<f64>>, Vec<bool>) =
            if mesh.dimension == 1 {
                let nodes = degree * mesh.n;
                let element_nodes = (0..mesh.n)
                    .map(|e| (0..=degree).map(|l| e * degree + l).collect())
                    .collect();
                let coords = (0..=nodes).map(|j| vec![j as f64 / nodes as f64]).collect();
                let mut dirichlet = vec![false; nodes + 1];
                dirichlet[0] = true;
                (element_nodes, coords, dirichlet)
            } else {
                let dirichlet = mesh
                    .boundary_flags
                    .iter()
                    .map(|f| *f == BoundaryFlag::Dirichlet)
                    .collect();
                (mesh.elements.clone(), mesh.vertices.clone(), dirichlet)
            };

        let mut dof_of_node = vec![None; node_coords.len()];
        let mut node_of_dof = Vec::new();
        for (node, is_dir) in dirichlet.iter().enumerate() {
            if !is_dir {
                dof_of_node[node] = Some(node_of_dof.len());
                node_of_dof.push(node);
            }
        }
        let mut support_map = vec![Vec::new(); node_of_dof.len()];
        for (e, nodes) in element_nodes.iter().enumerate() {
            for &node in nodes {
                if let Some(d) = dof_of_node[node] {
                    support_map[d].push(e);
                }
            }
        }
        let shapes_1d = if mesh.dimension == 1 { lagrange_shapes(degree) } else { Vec::new() };
        Ok(Self {
            dimension: mesh.dimension,
            mesh_n: mesh.n,
            degree,
            normalization,
            scale,
            element_nodes,
            node_coords,
            dof_of_node,
            node_of_dof,
            support_map,
            shapes_1d,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub(crate) fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if mesh.dimension != self.dimension || mesh.n != self.mesh_n || mesh.elements.len() != self.element_nodes.len()
        {
            return Err(invalid("basis was built for a different mesh"));
        }
        Ok(())
    }

    /// Value of the (unit-peak) nodal shape function of `node` at `x`, ignoring
    /// the normalization scale and the Dirichlet constraint.
    pub fn eval_node_shape(&self, mesh: &Mesh, node: usize, x: &[f64]) -> Result<f64> {
        let e = mesh.locate(x)?;
        Ok(self.local_shape_value(mesh, e, node, x))
    }

    fn local_shape_value(&self, mesh: &Mesh, e: usize, node: usize, x: &[f64]) -> f64 {
        let Some(local) = self.element_nodes[e].iter().position(|&g| g == node) else {
            return 0.0;
        };
        match self.dimension {
            1 => {
                let x0 = mesh.vertices[mesh.elements[e][0]][0];
                self.shapes_1d[local].eval((x[0] - x0) / mesh.h)
            }
            _ => barycentric(mesh, e, x)[local],
        }
    }
}

/// Lagrange polynomials on `[0, 1]` for equispaced nodes `l / k`.
pub fn lagrange_shapes(k: usize) -> Vec<Polynomial> {
    let t: Vec<f64> = (0..=k).map(|l| l as f64 / k as f64).collect();
    (0..=k)
        .map(|l| {
            let mut p = Polynomial::constant(1.0);
            for m in 0..=k {
                if m != l {
                    let denom = t[l] - t[m];
                    p = p.mul(&Polynomial::new(vec![-t[m] / denom, 1.0 / denom]));
                }
            }
            p
        })
        .collect()
}

pub(crate) fn barycentric(mesh: &Mesh, e: usize, x: &[f64]) -> [f64; 3] {
    let el = &mesh.elements[e];
    let (a, b, c) = (&mesh.vertices[el[0]], &mesh.vertices[el[1]], &mesh.vertices[el[2]]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Value of basis function `i` at `x`.
pub fn eval_basis(mesh: &Mesh, spec: &BasisSpec, i: usize, x: &[f64]) -> Result<f64> {
    spec.check_mesh(mesh)?;
    if i >= spec.dof_count() {
        return Err(invalid(format!("dof {i} out of range ({} dofs)", spec.dof_count())));
    }
    let node = spec.node_of_dof[i];
    Ok(spec.scale * spec.eval_node_shape(mesh, node, x)?)
}
