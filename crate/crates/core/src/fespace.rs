//! Discrete spaces: continuous P2 (optionally bubble-enriched) vector
//! velocity with zero trace, discontinuous P0/P1 pressure, continuous P1
//! concentration. DOF ordering is vertices, then edge midpoints, then
//! bubbles, each in mesh-entity order, so system matrices are reproducible.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::Triplets;
use crate::mesh::{Mesh, Point};

#[derive(Debug, Error)]
pub enum FESpaceError {
    #[error("unknown pairing tag: {0}")]
    UnknownPairing(String),
    #[error("element id {0} out of range")]
    ElementOutOfRange(usize),
    #[error("dof {0} is not a boundary dof")]
    NotBoundaryDof(usize),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    P0,
    P1,
    P1Disc,
    P2,
    P2Bubble,
}

impl Family {
    pub fn local_dofs(&self) -> usize {
        match self {
            Family::P0 => 1,
            Family::P1 | Family::P1Disc => 3,
            Family::P2 => 6,
            Family::P2Bubble => 7,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Family::P1 | Family::P2 | Family::P2Bubble)
    }

    pub fn degree(&self) -> usize {
        match self {
            Family::P0 => 0,
            Family::P1 | Family::P1Disc => 1,
            Family::P2 => 2,
            Family::P2Bubble => 3,
        }
    }

    /// Basis values and reference gradients at a reference point.
    /// Local ordering: vertices, then edge midpoint opposite vertex i, then bubble.
    pub fn eval_basis(&self, xi: Point) -> (Vec<f64>, Vec<Point>) {
        let (x, y) = (xi[0], xi[1]);
        let l = [1.0 - x - y, x, y];
        let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        match self {
            Family::P0 => (vec![1.0], vec![[0.0, 0.0]]),
            Family::P1 | Family::P1Disc => (l.to_vec(), dl.to_vec()),
            Family::P2 | Family::P2Bubble => {
                let mut vals = Vec::with_capacity(self.local_dofs());
                let mut grads = Vec::with_capacity(self.local_dofs());
                for i in 0..3 {
                    vals.push(l[i] * (2.0 * l[i] - 1.0));
                    grads.push([
                        dl[i][0] * (4.0 * l[i] - 1.0),
                        dl[i][1] * (4.0 * l[i] - 1.0),
                    ]);
                }
                // midpoint basis on the edge opposite vertex i: 4 l_{i+1} l_{i+2}
                for i in 0..3 {
                    let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                    vals.push(4.0 * l[a] * l[b]);
                    grads.push([
                        4.0 * (dl[a][0] * l[b] + l[a] * dl[b][0]),
                        4.0 * (dl[a][1] * l[b] + l[a] * dl[b][1]),
                    ]);
                }
                if matches!(self, Family::P2Bubble) {
                    vals.push(27.0 * l[0] * l[1] * l[2]);
                    grads.push([
                        27.0 * (dl[0][0] * l[1] * l[2] + l[0] * dl[1][0] * l[2] + l[0] * l[1] * dl[2][0]),
                        27.0 * (dl[0][1] * l[1] * l[2] + l[0] * dl[1][1] * l[2] + l[0] * l[1] * dl[2][1]),
                    ]);
                }
                (vals, grads)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Continuous P2 velocity with discontinuous P0 pressure.
    P2P0,
    /// Conforming Crouzeix-Raviart: P2+bubble velocity, discontinuous P1 pressure.
    CrouzeixRaviart,
}

impl Pairing {
    pub fn parse(tag: &str) -> Result<Pairing, FESpaceError> {
        match tag {
            "p2p0" | "P2_P0" => Ok(Pairing::P2P0),
            "crouzeix-raviart" | "P2bubble_P1disc" => Ok(Pairing::CrouzeixRaviart),
            other => Err(FESpaceError::UnknownPairing(other.to_string())),
        }
    }
}

#[derive(Debug)]
pub struct FESpace {
    pub mesh: Arc<Mesh>,
    pub family: Family,
    pub components: usize,
    pub ndof_scalar: usize,
    /// Scalar DOF ids per element, in local basis order.
    pub elem_dofs: Vec<Vec<usize>>,
    /// Nodal point of each scalar DOF (barycenter for bubbles/P0).
    pub dof_points: Vec<Point>,
    pub boundary_scalar: Vec<bool>,
    /// Whether the DOF functional is point evaluation (false for bubbles).
    pub nodal: Vec<bool>,
}

impl FESpace {
    pub fn new(mesh: Arc<Mesh>, family: Family, components: usize) -> Self {
        let nv = mesh.vertices.len();
        let ne = mesh.edges.len();
        let nelem = mesh.n_elements();
        let mut dof_points;
        let mut boundary_scalar;
        let mut nodal;
        let ndof_scalar;
        let mut elem_dofs = vec![Vec::new(); nelem];
        match family {
            Family::P0 => {
                ndof_scalar = nelem;
                dof_points = (0..nelem).map(|e| mesh.element_barycenter(e)).collect();
                boundary_scalar = vec![false; nelem];
                nodal = vec![true; nelem];
                for (e, d) in elem_dofs.iter_mut().enumerate() {
                    d.push(e);
                }
            }
            Family::P1Disc => {
                ndof_scalar = 3 * nelem;
                dof_points = Vec::with_capacity(ndof_scalar);
                for e in 0..nelem {
                    let vs = mesh.element_vertices(e);
                    for v in vs {
                        dof_points.push(v);
                    }
                    elem_dofs[e] = vec![3 * e, 3 * e + 1, 3 * e + 2];
                }
                boundary_scalar = vec![false; ndof_scalar];
                nodal = vec![true; ndof_scalar];
            }
            Family::P1 => {
                ndof_scalar = nv;
                dof_points = mesh.vertices.clone();
                boundary_scalar = mesh.boundary_vertex.clone();
                nodal = vec![true; nv];
                for (e, d) in elem_dofs.iter_mut().enumerate() {
                    d.extend(mesh.elements[e].iter().copied());
                }
            }
            Family::P2 | Family::P2Bubble => {
                let with_bubble = matches!(family, Family::P2Bubble);
                ndof_scalar = nv + ne + if with_bubble { nelem } else { 0 };
                dof_points = mesh.vertices.clone();
                for edge in &mesh.edges {
                    let a = mesh.vertices[edge[0]];
                    let b = mesh.vertices[edge[1]];
                    dof_points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                }
                boundary_scalar = mesh.boundary_vertex.clone();
                boundary_scalar.extend(mesh.boundary_edge_flag.iter().copied());
                nodal = vec![true; nv + ne];
                if with_bubble {
                    for e in 0..nelem {
                        dof_points.push(mesh.element_barycenter(e));
                        boundary_scalar.push(false);
                        nodal.push(false);
                    }
                }
                for (e, d) in elem_dofs.iter_mut().enumerate() {
                    d.extend(mesh.elements[e].iter().copied());
                    d.extend(mesh.element_edges[e].iter().map(|&id| nv + id));
                    if with_bubble {
                        d.push(nv + ne + e);
                    }
                }
            }
        }
        debug_assert_eq!(dof_points.len(), ndof_scalar);
        debug_assert_eq!(boundary_scalar.len(), ndof_scalar);
        debug_assert_eq!(nodal.len(), ndof_scalar);
        FESpace {
            mesh,
            family,
            components,
            ndof_scalar,
            elem_dofs,
            dof_points,
            boundary_scalar,
            nodal,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.ndof_scalar * self.components
    }

    #[inline]
    pub fn global_dof(&self, scalar_dof: usize, comp: usize) -> usize {
        scalar_dof * self.components + comp
    }

    /// Global boundary DOF ids (all components).
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (s, &b) in self.boundary_scalar.iter().enumerate() {
            if b {
                for c in 0..self.components {
                    out.push(self.global_dof(s, c));
                }
            }
        }
        out
    }

    /// Dimension after removing constrained boundary DOFs.
    pub fn free_dim(&self) -> usize {
        self.n_dofs() - self.boundary_dofs().len()
    }

    /// Scalar DOF -> adjacent elements.
    pub fn dof_elements(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.ndof_scalar];
        for (e, dofs) in self.elem_dofs.iter().enumerate() {
            for &d in dofs {
                adj[d].push(e);
            }
        }
        adj
    }

    pub fn zero_function(self: &Arc<Self>) -> FEFunction {
        FEFunction { space: Arc::clone(self), coeffs: vec![0.0; self.n_dofs()] }
    }

    /// Nodal interpolation of a point-evaluable function (one closure value
    /// per component). Bubble DOFs are corrected so the barycenter value
    /// matches exactly.
    pub fn interpolate(self: &Arc<Self>, g: &dyn Fn(Point) -> Vec<f64>) -> FEFunction {
        let mut coeffs = vec![0.0; self.n_dofs()];
        for s in 0..self.ndof_scalar {
            if self.nodal[s] {
                let vals = g(self.dof_points[s]);
                for c in 0..self.components {
                    coeffs[self.global_dof(s, c)] = vals[c];
                }
            }
        }
        let mut f = FEFunction { space: Arc::clone(self), coeffs };
        if matches!(self.family, Family::P2Bubble) {
            let bary = [1.0 / 3.0, 1.0 / 3.0];
            for e in 0..self.mesh.n_elements() {
                let target = g(self.mesh.element_barycenter(e));
                let (vals, _) = f.evaluate(e, bary);
                let bubble = *self.elem_dofs[e].last().unwrap();
                for c in 0..self.components {
                    // bubble basis value at barycenter is 1
                    f.coeffs[self.global_dof(bubble, c)] += target[c] - vals[c];
                }
            }
        }
        f
    }
}

/// Coefficient vector over a space, with point evaluation of values and
/// physical gradients.
#[derive(Debug, Clone)]
pub struct FEFunction {
    pub space: Arc<FESpace>,
    pub coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn from_coeffs(space: Arc<FESpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.n_dofs());
        FEFunction { space, coeffs }
    }

    /// Values and physical gradients per component at a reference point.
    pub fn evaluate(&self, elem: usize, refpt: Point) -> (Vec<f64>, Vec<Point>) {
        let sp = &self.space;
        let (vals, grads) = sp.family.eval_basis(refpt);
        let map = sp.mesh.affine_map(elem);
        let ncomp = sp.components;
        let mut out_v = vec![0.0; ncomp];
        let mut out_g = vec![[0.0, 0.0]; ncomp];
        for (k, &sdof) in sp.elem_dofs[elem].iter().enumerate() {
            let g = map.grad_to_physical(grads[k]);
            for c in 0..ncomp {
                let coef = self.coeffs[sp.global_dof(sdof, c)];
                out_v[c] += coef * vals[k];
                out_g[c][0] += coef * g[0];
                out_g[c][1] += coef * g[1];
            }
        }
        (out_v, out_g)
    }

    pub fn value(&self, elem: usize, refpt: Point) -> Vec<f64> {
        self.evaluate(elem, refpt).0
    }

    /// Max |coefficient| over nodal DOFs, a cheap sup-norm proxy.
    pub fn coeff_sup(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn zero_boundary(&mut self) {
        for d in self.space.boundary_dofs() {
            self.coeffs[d] = 0.0;
        }
    }
}

/// Velocity, pressure and concentration spaces for a pairing.
pub fn build_spaces(
    mesh: &Arc<Mesh>,
    pairing: Pairing,
) -> (Arc<FESpace>, Arc<FESpace>, Arc<FESpace>) {
    let (vfam, qfam) = match pairing {
        Pairing::P2P0 => (Family::P2, Family::P0),
        Pairing::CrouzeixRaviart => (Family::P2Bubble, Family::P1Disc),
    };
    let v = Arc::new(FESpace::new(Arc::clone(mesh), vfam, 2));
    let q = Arc::new(FESpace::new(Arc::clone(mesh), qfam, 1));
    let z = Arc::new(FESpace::new(Arc::clone(mesh), Family::P1, 1));
    (v, q, z)
}

/// Symmetric Dirichlet elimination on a triplet system: constrained rows and
/// columns are removed, the diagonal is set to 1 and the right-hand side to
/// the prescribed value (column contributions move to the rhs).
pub fn constrain_system(
    triplets: &mut Triplets,
    rhs: &mut [f64],
    values: &HashMap<usize, f64>,
) {
    let old = std::mem::replace(triplets, Triplets::new(triplets.nrows, triplets.ncols));
    for (i, j, v) in old.entries {
        match (values.contains_key(&i), values.get(&j)) {
            (true, _) => {}
            (false, Some(&g)) => rhs[i] -= v * g,
            (false, None) => triplets.push(i, j, v),
        }
    }
    for (&d, &g) in values {
        triplets.push(d, d, 1.0);
        rhs[d] = g;
    }
}

/// Dirichlet application with boundary-DOF validation, offset by `row_offset`
/// inside a larger block system.
pub fn apply_dirichlet(
    space: &FESpace,
    triplets: &mut Triplets,
    rhs: &mut [f64],
    values: &HashMap<usize, f64>,
    row_offset: usize,
) -> Result<(), FESpaceError> {
    let boundary: std::collections::HashSet<usize> = space.boundary_dofs().into_iter().collect();
    for &d in values.keys() {
        if !boundary.contains(&d) {
            return Err(FESpaceError::NotBoundaryDof(d));
        }
    }
    let shifted: HashMap<usize, f64> =
        values.iter().map(|(&d, &g)| (d + row_offset, g)).collect();
    constrain_system(triplets, rhs, &shifted);
    Ok(())
}
