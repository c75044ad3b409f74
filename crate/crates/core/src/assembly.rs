//! Quadrature and assembly of the weak forms: skew-symmetric trilinear
//! forms, the nonlinear momentum residual/Jacobian with pressure-divergence
//! coupling, and the concentration system.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::fespace::{FEFunction, FESpace};
use crate::linalg::Triplets;
use crate::mesh::Point;
use crate::physics::{FluxParams, StressParams};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("quadrature overflow: |integrand| not finite on element {0}")]
    QuadratureOverflow(usize),
}

/// Gauss-Legendre nodes/weights on [0,1] via Newton on the Legendre polynomial.
fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // initial guess on [-1,1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n and derivative by recurrence
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Quadrature on the reference simplex {(0,0),(1,0),(0,1)}, exact for
/// polynomials up to the stated order. Built from a collapsed tensor Gauss
/// rule, so the weights are positive by construction.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub order: usize,
    points: Vec<(f64, Point)>,
}

impl QuadratureRule {
    pub fn degree(order: usize) -> Self {
        // n-point Gauss per direction integrates the collapsed integrand
        // (degree order+1 in u) exactly when 2n-1 >= order+1
        let n = (order + 3) / 2;
        let g = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        for &(u, wu) in &g {
            for &(v, wv) in &g {
                let x = u;
                let y = v * (1.0 - u);
                points.push((wu * wv * (1.0 - u), [x, y]));
            }
        }
        QuadratureRule { order, points }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, Point)> + '_ {
        self.points.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.points.iter().map(|(w, _)| w).sum()
    }
}

/// Gauss rule on the unit interval for edge integrals.
pub fn edge_rule(npoints: usize) -> Vec<(f64, f64)> {
    gauss_legendre_unit(npoints)
}

/// Default over-integration order for nonlinear integrands.
pub const DEFAULT_ORDER: usize = 6;

pub fn same_space(a: &FEFunction, b: &FEFunction) -> Result<(), AssemblyError> {
    if !Arc::ptr_eq(&a.space, &b.space) {
        return Err(AssemblyError::SpaceMismatch(
            "arguments must share one space".into(),
        ));
    }
    Ok(())
}

fn tensor_dot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Skew-symmetrized convection form
/// B_u[v,w,h] = 1/2 int ((v . grad w) . h - (v . grad h) . w).
pub fn trilinear_bu(
    v: &FEFunction,
    w: &FEFunction,
    h: &FEFunction,
    quad: &QuadratureRule,
) -> Result<f64, AssemblyError> {
    same_space(v, w)?;
    same_space(v, h)?;
    let mesh = &v.space.mesh;
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (wq, xi) in quad.points() {
            let (vv, _) = v.evaluate(e, xi);
            let (hv, hg) = h.evaluate(e, xi);
            let (wv, wg) = w.evaluate(e, xi);
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += vv[j] * (hv[i] * wg[i][j] - wv[i] * hg[i][j]);
                }
            }
            total += 0.5 * wq * map.det * s;
        }
    }
    Ok(total)
}

/// B_c[b,v,z] = 1/2 int (z v . grad b - b v . grad z).
pub fn trilinear_bc(
    b: &FEFunction,
    v: &FEFunction,
    z: &FEFunction,
    quad: &QuadratureRule,
) -> Result<f64, AssemblyError> {
    if b.space.components != 1 || z.space.components != 1 || v.space.components != 2 {
        return Err(AssemblyError::SpaceMismatch(
            "B_c expects scalar b, vector v, scalar z".into(),
        ));
    }
    let mesh = &v.space.mesh;
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (wq, xi) in quad.points() {
            let (bv, bg) = b.evaluate(e, xi);
            let (vv, _) = v.evaluate(e, xi);
            let (zv, zg) = z.evaluate(e, xi);
            let s = zv[0] * (vv[0] * bg[0][0] + vv[1] * bg[0][1])
                - bv[0] * (vv[0] * zg[0][0] + vv[1] * zg[0][1]);
            total += 0.5 * wq * map.det * s;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    Picard,
    Newton,
}

/// Assembled saddle blocks for one linearized momentum step, or the scalar
/// concentration system.
pub struct AssembledSystem {
    /// System over [velocity dofs | pressure dofs | mean-pressure multiplier].
    pub matrix: Triplets,
    pub rhs: Vec<f64>,
    pub n_vel: usize,
    pub n_press: usize,
}

pub struct MomentumState<'a> {
    pub velocity: &'a FEFunction,
    pub pressure: &'a FEFunction,
    pub concentration: &'a FEFunction,
    pub stress: &'a StressParams,
    pub forcing: &'a dyn Fn(Point) -> [f64; 2],
}

fn sym_grad(g: &[Point]) -> [[f64; 2]; 2] {
    [
        [g[0][0], 0.5 * (g[0][1] + g[1][0])],
        [0.5 * (g[0][1] + g[1][0]), g[1][1]],
    ]
}

/// Momentum residual over all velocity test functions plus constraint rows:
/// R_V = int S(C,DU).DV + B_u[U,U,V] - int P div V - <f,V>,
/// R_Q = int Q div U, plus the zero-mean pressure row.
pub fn assemble_momentum_residual(
    state: &MomentumState,
    quad: &QuadratureRule,
) -> Result<Vec<f64>, AssemblyError> {
    let v_space = &state.velocity.space;
    let q_space = &state.pressure.space;
    let mesh = &v_space.mesh;
    let n_vel = v_space.n_dofs();
    let n_press = q_space.n_dofs();
    let mut res = vec![0.0; n_vel + n_press + 1];

    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (wq, xi) in quad.points() {
            let w = wq * map.det;
            let (uval, ugrad) = state.velocity.evaluate(e, xi);
            let (pval, _) = state.pressure.evaluate(e, xi);
            let (cval, _) = state.concentration.evaluate(e, xi);
            let du = sym_grad(&ugrad);
            let stress = state.stress.stress(cval[0], du);
            if !tensor_dot(&stress, &stress).is_finite() {
                return Err(AssemblyError::QuadratureOverflow(e));
            }
            let phys = map.apply(xi);
            let f = (state.forcing)(phys);
            let div_u = ugrad[0][0] + ugrad[1][1];

            let (vvals, vgrads_ref) = v_space.family.eval_basis(xi);
            let vgrads: Vec<Point> =
                vgrads_ref.iter().map(|&g| map.grad_to_physical(g)).collect();
            for (k, &sdof) in v_space.elem_dofs[e].iter().enumerate() {
                for c in 0..2 {
                    // test function V = vvals[k] e_c
                    let mut tg = [[0.0; 2]; 2];
                    tg[c] = vgrads[k];
                    let dv = sym_grad(&[tg[0], tg[1]]);
                    let mut r = tensor_dot(&stress, &dv) * w;
                    // B_u[U,U,V]: 1/2 ((U.grad U).V - (U.grad V).U)
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..2 {
                        s1 += uval[j] * ugrad[c][j] * vvals[k];
                        s2 += uval[j] * vgrads[k][j] * uval[c];
                    }
                    r += 0.5 * (s1 - s2) * w;
                    let div_v = vgrads[k][c];
                    r -= pval[0] * div_v * w;
                    r -= f[c] * vvals[k] * w;
                    res[v_space.global_dof(sdof, c)] += r;
                }
            }

            let (qvals, _) = q_space.family.eval_basis(xi);
            for (k, &sdof) in q_space.elem_dofs[e].iter().enumerate() {
                res[n_vel + sdof] += qvals[k] * div_u * w;
            }
            // zero-mean pressure constraint row
            res[n_vel + n_press] += pval[0] * w;
        }
    }
    Ok(res)
}

/// Linearized momentum operator (Picard: frozen viscosity + Oseen transport;
/// Newton: full stress tangent + both convection derivatives). The system is
/// the saddle matrix over [velocity | pressure | mean-pressure multiplier].
pub fn assemble_momentum_matrix(
    state: &MomentumState,
    lin: Linearization,
    quad: &QuadratureRule,
) -> Result<AssembledSystem, AssemblyError> {
    let v_space = &state.velocity.space;
    let q_space = &state.pressure.space;
    let mesh = &v_space.mesh;
    let n_vel = v_space.n_dofs();
    let n_press = q_space.n_dofs();
    let n = n_vel + n_press + 1;
    let mut tri = Triplets::new(n, n);

    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (wq, xi) in quad.points() {
            let w = wq * map.det;
            let (uval, ugrad) = state.velocity.evaluate(e, xi);
            let (cval, _) = state.concentration.evaluate(e, xi);
            let du = sym_grad(&ugrad);

            let (vvals, vgrads_ref) = v_space.family.eval_basis(xi);
            let vgrads: Vec<Point> =
                vgrads_ref.iter().map(|&g| map.grad_to_physical(g)).collect();
            let (qvals, _) = q_space.family.eval_basis(xi);

            let nloc = vvals.len();
            // local symmetric strain tensors of basis functions (per dof, per comp)
            let mut dphis: Vec<[[[f64; 2]; 2]; 2]> = Vec::with_capacity(nloc);
            for g in vgrads.iter().take(nloc) {
                let mut per_comp = [[[0.0; 2]; 2]; 2];
                for c in 0..2 {
                    let mut tg = [[0.0; 2]; 2];
                    tg[c] = *g;
                    per_comp[c] = sym_grad(&[tg[0], tg[1]]);
                }
                dphis.push(per_comp);
            }

            let visc = state.stress.viscosity(cval[0], &du);
            let tangent = if lin == Linearization::Newton {
                Some(state.stress.stress_tangent(cval[0], &du))
            } else {
                None
            };

            for (a, &da) in v_space.elem_dofs[e].iter().enumerate() {
                for ca in 0..2 {
                    let row = v_space.global_dof(da, ca);
                    let dva = dphis[a][ca];
                    for (b, &db) in v_space.elem_dofs[e].iter().enumerate() {
                        for cb in 0..2 {
                            let col = v_space.global_dof(db, cb);
                            let dvb = dphis[b][cb];
                            let mut val = match &tangent {
                                None => visc * tensor_dot(&dva, &dvb),
                                Some(t) => {
                                    crate::physics::apply_tangent_dot(t, &dvb, &dva)
                                }
                            };
                            // Oseen transport B_u[U, phi_b, phi_a]:
                            // 1/2 delta_{ca,cb} (U.grad phi_b phi_a
                            //                    - U.grad phi_a phi_b)
                            if ca == cb {
                                let mut t = 0.0;
                                for j in 0..2 {
                                    t += uval[j]
                                        * (vvals[a] * vgrads[b][j]
                                            - vvals[b] * vgrads[a][j]);
                                }
                                val += 0.5 * t;
                            }
                            if lin == Linearization::Newton {
                                // B_u[phi_b, U, phi_a]:
                                // 1/2 phi_b (phi_a d_cb U_ca - U_ca d_cb phi_a)
                                val += 0.5
                                    * vvals[b]
                                    * (vvals[a] * ugrad[ca][cb]
                                        - uval[ca] * vgrads[a][cb]);
                            }
                            tri.push(row, col, val * w);
                        }
                    }
                    // pressure coupling: -int P div V and constraint int Q div U
                    let div_a = vgrads[a][ca];
                    for (kq, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                        tri.push(row, n_vel + dq, -qvals[kq] * div_a * w);
                        tri.push(n_vel + dq, row, qvals[kq] * div_a * w);
                    }
                }
            }
            // zero-mean pressure multiplier rows
            for (kq, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                tri.push(n_vel + n_press, n_vel + dq, qvals[kq] * w);
                tri.push(n_vel + dq, n_vel + n_press, qvals[kq] * w);
            }
        }
    }

    Ok(AssembledSystem { matrix: tri, rhs: vec![0.0; n], n_vel, n_press })
}

/// Concentration system for a frozen velocity: bilinear part
/// int K(.,|DU|) grad C . grad Z + B_c[C, U, Z], Dirichlet data from c_d.
/// With K independent of c the system is linear in C.
pub struct ConcentrationSystem {
    pub matrix: Triplets,
    pub rhs: Vec<f64>,
}

pub fn assemble_concentration(
    velocity: &FEFunction,
    z_space: &Arc<FESpace>,
    flux: &FluxParams,
    dirichlet: &HashMap<usize, f64>,
    source: Option<&dyn Fn(Point) -> f64>,
    quad: &QuadratureRule,
) -> Result<ConcentrationSystem, AssemblyError> {
    let mesh = &z_space.mesh;
    let n = z_space.n_dofs();
    let mut tri = Triplets::new(n, n);
    let mut rhs = vec![0.0; n];

    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (wq, xi) in quad.points() {
            let w = wq * map.det;
            let (uval, ugrad) = velocity.evaluate(e, xi);
            let du = sym_grad(&ugrad);
            let dunorm = tensor_dot(&du, &du).sqrt();
            let k = flux.conductivity(dunorm);
            let (zvals, zgrads_ref) = z_space.family.eval_basis(xi);
            let zgrads: Vec<Point> =
                zgrads_ref.iter().map(|&g| map.grad_to_physical(g)).collect();
            for (a, &da) in z_space.elem_dofs[e].iter().enumerate() {
                for (b, &db) in z_space.elem_dofs[e].iter().enumerate() {
                    let diff = k * (zgrads[a][0] * zgrads[b][0] + zgrads[a][1] * zgrads[b][1]);
                    // B_c[phi_b, U, phi_a] = 1/2 (phi_a U.grad phi_b - phi_b U.grad phi_a)
                    let conv = 0.5
                        * (zvals[a] * (uval[0] * zgrads[b][0] + uval[1] * zgrads[b][1])
                            - zvals[b] * (uval[0] * zgrads[a][0] + uval[1] * zgrads[a][1]));
                    tri.push(da, db, (diff + conv) * w);
                }
                if let Some(src) = source {
                    rhs[da] += src(map.apply(xi)) * zvals[a] * w;
                }
            }
        }
    }
    crate::fespace::constrain_system(&mut tri, &mut rhs, dirichlet);
    Ok(ConcentrationSystem { matrix: tri, rhs })
}

/// Ratio |B_u[v,w,h]| / (||v||_{1,r} ||w||_{1,r} ||h||_{1,r}) with
/// Luxemburg-based Sobolev norms; 0 when any argument vanishes.
pub fn bu_bound_check(
    v: &FEFunction,
    w: &FEFunction,
    h: &FEFunction,
    r: &crate::varexp::ExponentField,
    quad: &QuadratureRule,
) -> Result<f64, AssemblyError> {
    let bu = trilinear_bu(v, w, h, quad)?;
    let mesh = &v.space.mesh;
    let norm = |f: &FEFunction| {
        crate::varexp::sobolev_norm_1r(mesh, quad, f, r)
    };
    let (nv, nw, nh) = (norm(v), norm(w), norm(h));
    if nv == 0.0 || nw == 0.0 || nh == 0.0 {
        return Ok(0.0);
    }
    Ok(bu.abs() / (nv * nw * nh))
}
