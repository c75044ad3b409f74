//! Projections onto the discrete spaces: a divergence-moment-preserving
//! interpolant into the velocity space, element-local L2 projection onto the
//! pressure space, and a Clement interpolant onto the zero-trace scalar
//! space, together with stability/locality diagnostics.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{edge_rule, QuadratureRule};
use crate::fespace::{constrain_system, FEFunction, FESpace, Family};
use crate::linalg::{LinalgError, Triplets};
use crate::mesh::Point;
use crate::varexp::{luxemburg_norm, sobolev_norm_1r, ExponentField};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("projection expects {0}")]
    BadSpace(String),
    #[error("correction solve failed: {0}")]
    Solve(#[from] LinalgError),
}

const REF: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// One shared edge rule keeps the edge-average matching and the moment
/// evaluation consistent to rounding, not just to quadrature error.
const EDGE_POINTS: usize = 6;

/// Volume quadrature order used whenever divergence moments are matched.
pub const MOMENT_ORDER: usize = 8;

/// For each edge, the adjacent (element, local edge index) pairs.
fn edge_adjacency(mesh: &crate::mesh::Mesh) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); mesh.edges.len()];
    for e in 0..mesh.n_elements() {
        for (le, &id) in mesh.element_edges[e].iter().enumerate() {
            adj[id].push((e, le));
        }
    }
    adj
}

/// Average of a sampled field along an edge, evaluated from each adjacent
/// element and averaged across sides.
fn edge_average(
    adj: &[(usize, usize)],
    field: &dyn Fn(usize, Point) -> Vec<f64>,
    ncomp: usize,
    gauss: &[(f64, f64)],
) -> Vec<f64> {
    let mut avg = vec![0.0; ncomp];
    for &(e, le) in adj {
        let a = REF[(le + 1) % 3];
        let b = REF[(le + 2) % 3];
        for &(t, w) in gauss {
            let xi = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let v = field(e, xi);
            for c in 0..ncomp {
                avg[c] += w * v[c];
            }
        }
    }
    for c in avg.iter_mut() {
        *c /= adj.len() as f64;
    }
    avg
}

/// Interpolate a sampled field into a nodal-plus-edge space so that vertex
/// values are patch averages and every edge average is matched exactly
/// (P2 trace is quadratic, so Simpson gives the midpoint dof in closed
/// form). For a bubble-enriched space the element integral is matched too.
fn nodal_edge_interpolant(
    space: &Arc<FESpace>,
    field: &dyn Fn(usize, Point) -> Vec<f64>,
) -> FEFunction {
    let mesh = &space.mesh;
    let nv = mesh.vertices.len();
    let ne = mesh.edges.len();
    let ncomp = space.components;
    let mut out = space.zero_function();

    // vertex dofs: average over all elements touching the vertex
    let velems = mesh.vertex_elements();
    for (v, elems) in velems.iter().enumerate() {
        let mut acc = vec![0.0; ncomp];
        for &e in elems {
            let li = mesh.elements[e].iter().position(|&g| g == v).unwrap();
            let vals = field(e, REF[li]);
            for c in 0..ncomp {
                acc[c] += vals[c];
            }
        }
        for c in 0..ncomp {
            out.coeffs[space.global_dof(v, c)] = acc[c] / elems.len() as f64;
        }
    }

    // edge dofs: match the edge average; with quadratic trace and endpoint
    // values a, b already fixed, Simpson gives m = (6 avg - a - b) / 4
    let adj = edge_adjacency(mesh);
    let gauss = edge_rule(EDGE_POINTS);
    for (id, edge) in mesh.edges.iter().enumerate() {
        let avg = edge_average(&adj[id], field, ncomp, &gauss);
        for c in 0..ncomp {
            let a = out.coeffs[space.global_dof(edge[0], c)];
            let b = out.coeffs[space.global_dof(edge[1], c)];
            out.coeffs[space.global_dof(nv + id, c)] = (6.0 * avg[c] - a - b) / 4.0;
        }
    }

    // bubble dofs: match the element integral
    if space.family == Family::P2Bubble {
        let quad = QuadratureRule::degree(6);
        for e in 0..mesh.n_elements() {
            let map = mesh.affine_map(e);
            let mut defect = vec![0.0; ncomp];
            let mut bubble_mass = 0.0;
            for (w, xi) in quad.points() {
                let target = field(e, xi);
                let (cur, _) = out.evaluate(e, xi);
                let (bvals, _) = space.family.eval_basis(xi);
                bubble_mass += w * map.det * bvals[6];
                for c in 0..ncomp {
                    defect[c] += w * map.det * (target[c] - cur[c]);
                }
            }
            for c in 0..ncomp {
                out.coeffs[space.global_dof(nv + ne + e, c)] = defect[c] / bubble_mass;
            }
        }
    }
    out
}

/// Divergence moments <div v, q> for every pressure dof q, computed from
/// values only via elementwise integration by parts:
/// int_T q div v = -int_T v . grad q + int_{dT} q v.n.
pub fn divergence_moments(
    q_space: &Arc<FESpace>,
    field: &dyn Fn(usize, Point) -> Vec<f64>,
    quad: &QuadratureRule,
) -> Vec<f64> {
    let mesh = &q_space.mesh;
    let mut g = vec![0.0; q_space.n_dofs()];
    let gauss = edge_rule(EDGE_POINTS);
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        // volume part
        for (w, xi) in quad.points() {
            let v = field(e, xi);
            let (_, qgrads_ref) = q_space.family.eval_basis(xi);
            for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                let gq = map.grad_to_physical(qgrads_ref[k]);
                g[dq] -= w * map.det * (v[0] * gq[0] + v[1] * gq[1]);
            }
        }
        // boundary part over the three edges
        let verts = mesh.element_vertices(e);
        for le in 0..3 {
            let (ra, rb) = (REF[(le + 1) % 3], REF[(le + 2) % 3]);
            let (pa, pb) = (verts[(le + 1) % 3], verts[(le + 2) % 3]);
            let tangent = [pb[0] - pa[0], pb[1] - pa[1]];
            let len = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
            // outward normal for a CCW triangle: rotate the tangent clockwise
            let normal = [tangent[1] / len, -tangent[0] / len];
            for &(t, w) in &gauss {
                let xi = [ra[0] + t * (rb[0] - ra[0]), ra[1] + t * (rb[1] - ra[1])];
                let v = field(e, xi);
                let (qvals, _) = q_space.family.eval_basis(xi);
                let vn = v[0] * normal[0] + v[1] * normal[1];
                for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                    g[dq] += w * len * qvals[k] * vn;
                }
            }
        }
    }
    g
}

/// Zero-trace velocity field minimizing int |grad V|^2 subject to
/// <div V, q> = g_q for every pressure dof (a Stokes-type saddle solve with
/// the constant pressure mode pinned by an extra multiplier).
pub fn constrained_velocity_solve(
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    g: &[f64],
    quad: &QuadratureRule,
) -> Result<FEFunction, ProjectionError> {
    let mesh = &v_space.mesh;
    let n_vel = v_space.n_dofs();
    let n_press = q_space.n_dofs();
    let n = n_vel + n_press + 1;
    let mut tri = Triplets::new(n, n);
    let mut rhs = vec![0.0; n];
    rhs[n_vel..n_vel + n_press].copy_from_slice(g);

    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let (_, vgrads_ref) = v_space.family.eval_basis(xi);
            let vgrads: Vec<Point> =
                vgrads_ref.iter().map(|&gr| map.grad_to_physical(gr)).collect();
            let (qvals, _) = q_space.family.eval_basis(xi);
            for (a, &da) in v_space.elem_dofs[e].iter().enumerate() {
                for (b, &db) in v_space.elem_dofs[e].iter().enumerate() {
                    let lap = vgrads[a][0] * vgrads[b][0] + vgrads[a][1] * vgrads[b][1];
                    for c in 0..2 {
                        tri.push(
                            v_space.global_dof(da, c),
                            v_space.global_dof(db, c),
                            lap * wd,
                        );
                    }
                }
                for c in 0..2 {
                    let row = v_space.global_dof(da, c);
                    let div_a = vgrads[a][c];
                    for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                        tri.push(row, n_vel + dq, qvals[k] * div_a * wd);
                        tri.push(n_vel + dq, row, qvals[k] * div_a * wd);
                    }
                }
            }
            for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                tri.push(n_vel + dq, n_vel + n_press, qvals[k] * wd);
                tri.push(n_vel + n_press, n_vel + dq, qvals[k] * wd);
            }
        }
    }
    let bc: HashMap<usize, f64> = v_space.boundary_dofs().into_iter().map(|d| (d, 0.0)).collect();
    constrain_system(&mut tri, &mut rhs, &bc);
    let mat = tri.finalize();
    let sol = mat.factorize()?.solve(&rhs);
    Ok(FEFunction::from_coeffs(
        Arc::clone(v_space),
        sol[..n_vel].to_vec(),
    ))
}

/// Projection into the velocity space preserving all divergence moments
/// against the pressure space: nodal/edge (and bubble) matching, plus a
/// minimal-energy zero-trace correction when edge averages alone do not pin
/// the higher pressure moments (the bubble-enriched pairing).
pub fn project_div(
    field: &dyn Fn(usize, Point) -> Vec<f64>,
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
) -> Result<FEFunction, ProjectionError> {
    if v_space.components != 2 {
        return Err(ProjectionError::BadSpace("a 2-component velocity space".into()));
    }
    let mut out = nodal_edge_interpolant(v_space, field);
    if q_space.family == Family::P1Disc {
        let quad = QuadratureRule::degree(MOMENT_ORDER);
        let want = divergence_moments(q_space, field, &quad);
        let have = divergence_moments(
            q_space,
            &|e, xi| out.evaluate(e, xi).0,
            &quad,
        );
        let g: Vec<f64> = want.iter().zip(&have).map(|(a, b)| a - b).collect();
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if g.iter().any(|v| v.abs() > 1e-13 * (1.0 + scale)) {
            let delta = constrained_velocity_solve(v_space, q_space, &g, &quad)?;
            for (o, d) in out.coeffs.iter_mut().zip(&delta.coeffs) {
                *o += d;
            }
        }
    }
    Ok(out)
}

/// Element-local L2 projection onto the pressure space.
pub fn project_q(
    field: &dyn Fn(usize, Point) -> f64,
    q_space: &Arc<FESpace>,
    quad: &QuadratureRule,
) -> FEFunction {
    let mesh = &q_space.mesh;
    let mut out = q_space.zero_function();
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        let nloc = q_space.family.local_dofs();
        let mut mass = vec![vec![0.0; nloc]; nloc];
        let mut load = vec![0.0; nloc];
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let (qvals, _) = q_space.family.eval_basis(xi);
            let f = field(e, xi);
            for a in 0..nloc {
                load[a] += wd * f * qvals[a];
                for b in 0..nloc {
                    mass[a][b] += wd * qvals[a] * qvals[b];
                }
            }
        }
        let coeffs = solve_dense_small(&mut mass, &mut load);
        for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
            out.coeffs[dq] = coeffs[k];
        }
    }
    out
}

fn solve_dense_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        let d = a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / d;
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    x
}

/// Clement interpolant into the zero-trace P1 space: at each interior vertex
/// the value of the best L2 linear fit on the vertex patch; boundary
/// vertices are set to zero.
pub fn project_z(
    field: &dyn Fn(usize, Point) -> f64,
    z_space: &Arc<FESpace>,
    quad: &QuadratureRule,
) -> Result<FEFunction, ProjectionError> {
    if z_space.family != Family::P1 || z_space.components != 1 {
        return Err(ProjectionError::BadSpace("a scalar P1 space".into()));
    }
    let mesh = &z_space.mesh;
    let mut out = z_space.zero_function();
    let velems = mesh.vertex_elements();
    for (v, elems) in velems.iter().enumerate() {
        if mesh.boundary_vertex[v] {
            continue;
        }
        // least-squares linear fit p(x) = c0 + c1 x + c2 y on the patch
        let mut a = vec![vec![0.0; 3]; 3];
        let mut b = vec![0.0; 3];
        for &e in elems {
            let map = mesh.affine_map(e);
            for (w, xi) in quad.points() {
                let wd = w * map.det;
                let p = map.apply(xi);
                let basis = [1.0, p[0], p[1]];
                let f = field(e, xi);
                for i in 0..3 {
                    b[i] += wd * f * basis[i];
                    for j in 0..3 {
                        a[i][j] += wd * basis[i] * basis[j];
                    }
                }
            }
        }
        let c = solve_dense_small(&mut a, &mut b);
        let pv = mesh.vertices[v];
        out.coeffs[v] = c[0] + c[1] * pv[0] + c[2] * pv[1];
    }
    Ok(out)
}

/// Stability and locality constants of the three projections on one mesh,
/// measured on a fixed family of smooth sample fields.
#[derive(Debug, Clone)]
pub struct ProjectionReport {
    pub h_max: f64,
    /// sup ||Pi_div v||_{1,r} / ||v||_{1,r}
    pub div_ratio_max: f64,
    /// sup ||Pi_Q f||_r / ||f||_r
    pub q_ratio_max: f64,
    /// sup ||Pi_Z f||_{1,2} / ||f||_{1,2}
    pub z_ratio_max: f64,
    /// sup over elements of |Pi_div v|_{1,2;T} / |v|_{1,2;patch(T)}
    pub locality_max: f64,
}

type VecField = (
    Box<dyn Fn(Point) -> [f64; 2]>,
    Box<dyn Fn(Point) -> [[f64; 2]; 2]>,
);

/// Smooth zero-trace velocity samples (value, gradient) on the unit square.
fn velocity_samples() -> Vec<VecField> {
    let mut out: Vec<VecField> = Vec::new();
    for k in 1..=3usize {
        let kf = k as f64 * std::f64::consts::PI;
        let bump = move |p: Point| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
        let dbump = move |p: Point| {
            [
                (1.0 - 2.0 * p[0]) * p[1] * (1.0 - p[1]),
                p[0] * (1.0 - p[0]) * (1.0 - 2.0 * p[1]),
            ]
        };
        let val = move |p: Point| {
            let b = bump(p);
            [b * (kf * p[0]).sin(), b * (kf * (p[0] + p[1])).cos()]
        };
        let grad = move |p: Point| {
            let b = bump(p);
            let db = dbump(p);
            let s = (kf * p[0]).sin();
            let c = (kf * p[0]).cos();
            let s2 = (kf * (p[0] + p[1])).sin();
            let c2 = (kf * (p[0] + p[1])).cos();
            [
                [db[0] * s + b * kf * c, db[1] * s],
                [db[0] * c2 - b * kf * s2, db[1] * c2 - b * kf * s2],
            ]
        };
        out.push((Box::new(val), Box::new(grad)));
    }
    out
}

pub fn projection_constants(
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    z_space: &Arc<FESpace>,
    r: &ExponentField,
    quad: &QuadratureRule,
) -> Result<ProjectionReport, ProjectionError> {
    let mesh = &v_space.mesh;
    let mut div_ratio_max: f64 = 0.0;
    let mut locality_max: f64 = 0.0;

    // element -> patch (elements sharing a vertex)
    let velems = mesh.vertex_elements();
    let elem_patch: Vec<Vec<usize>> = (0..mesh.n_elements())
        .map(|e| {
            let mut members: Vec<usize> = mesh.elements[e]
                .iter()
                .flat_map(|&v| velems[v].iter().copied())
                .collect();
            members.sort_unstable();
            members.dedup();
            members
        })
        .collect();

    for (val, grad) in velocity_samples() {
        let sampled = |e: usize, xi: Point| {
            let p = mesh.affine_map(e).apply(xi);
            val(p).to_vec()
        };
        let proj = project_div(&sampled, v_space, q_space)?;
        let num = sobolev_norm_1r(mesh, quad, &proj, r);
        let den_val = luxemburg_norm(mesh, quad, &|_, _, p| {
            let v = val(p);
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        }, r);
        let den_grad = luxemburg_norm(mesh, quad, &|_, _, p| {
            let g = grad(p);
            crate::physics::tensor_norm(&g)
        }, r);
        let den = den_val + den_grad;
        if den > 1e-14 {
            div_ratio_max = div_ratio_max.max(num / den);
        }

        // locality in the H1 seminorm
        let elem_semi = |e: usize| -> f64 {
            let map = mesh.affine_map(e);
            let mut s = 0.0;
            for (w, xi) in quad.points() {
                let (_, g) = proj.evaluate(e, xi);
                s += w * map.det
                    * (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]);
            }
            s
        };
        for e in 0..mesh.n_elements() {
            let num2 = elem_semi(e);
            let mut den2 = 0.0;
            for &pe in &elem_patch[e] {
                let map = mesh.affine_map(pe);
                for (w, xi) in quad.points() {
                    let g = grad(map.apply(xi));
                    den2 += w * map.det * crate::physics::tensor_dot(&g, &g);
                }
            }
            if den2 > 1e-20 {
                locality_max = locality_max.max((num2 / den2).sqrt());
            }
        }
    }

    // pressure projection in the Luxemburg norm
    let mut q_ratio_max: f64 = 0.0;
    for k in 1..=3usize {
        let kf = k as f64;
        let f = move |p: Point| (2.5 * kf * p[0]).sin() + 0.5 * p[1] + 0.7;
        let sampled = |e: usize, xi: Point| f(mesh.affine_map(e).apply(xi));
        let proj = project_q(&sampled, q_space, quad);
        let num = luxemburg_norm(mesh, quad, &|e, xi, _| proj.evaluate(e, xi).0[0], r);
        let den = luxemburg_norm(mesh, quad, &|_, _, p| f(p), r);
        q_ratio_max = q_ratio_max.max(num / den);
    }

    // Clement in W^{1,2}
    let r2 = ExponentField::Constant(2.0);
    let mut z_ratio_max: f64 = 0.0;
    for k in 1..=3usize {
        let kf = k as f64 * std::f64::consts::PI;
        let f = move |p: Point| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]) * (kf * p[0]).cos()
        };
        let df = move |p: Point| {
            let b = p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
            let c = (kf * p[0]).cos();
            let s = (kf * p[0]).sin();
            [
                (1.0 - 2.0 * p[0]) * p[1] * (1.0 - p[1]) * c - b * kf * s,
                p[0] * (1.0 - p[0]) * (1.0 - 2.0 * p[1]) * c,
            ]
        };
        let sampled = |e: usize, xi: Point| f(mesh.affine_map(e).apply(xi));
        let proj = project_z(&sampled, z_space, quad)?;
        let num = sobolev_norm_1r(mesh, quad, &proj, &r2);
        let den = luxemburg_norm(mesh, quad, &|_, _, p| f(p).abs(), &r2)
            + luxemburg_norm(mesh, quad, &|_, _, p| {
                let g = df(p);
                (g[0] * g[0] + g[1] * g[1]).sqrt()
            }, &r2);
        z_ratio_max = z_ratio_max.max(num / den);
    }

    Ok(ProjectionReport {
        h_max: mesh.h_max(),
        div_ratio_max,
        q_ratio_max,
        z_ratio_max,
        locality_max,
    })
}
