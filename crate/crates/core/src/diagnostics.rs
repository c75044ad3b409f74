//! Solver-independent diagnostics: an approximate Hardy-Littlewood maximal
//! function, Lipschitz truncation (nodal and divergence-projected) with the
//! dyadic layer selection of the truncation level, a discrete right inverse
//! of the divergence, inf-sup constants, and interior Hoelder quotients.

use std::sync::Arc;

use thiserror::Error;

use crate::assembly::QuadratureRule;
use crate::fespace::{constrain_system, FEFunction, FESpace, Family};
use crate::linalg::{LinalgError, Triplets};
use crate::mesh::{Mesh, Point};
use crate::projections::{constrained_velocity_solve, divergence_moments, project_div, ProjectionError};
use crate::varexp::{luxemburg_norm, ExponentField};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("truncation level multiplier did not stabilize after {0} doublings")]
    TruncationUnstable(usize),
    #[error("inf-sup iteration did not converge in {0} steps")]
    InfSupStalled(usize),
}

/// Uniform-grid point location over a mesh.
pub struct PointLocator {
    mesh: Arc<Mesh>,
    min: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let n = (mesh.n_elements() as f64).sqrt().ceil() as usize + 1;
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / n as f64).max(1e-300);
        let nx = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for e in 0..mesh.n_elements() {
            let vs = mesh.element_vertices(e);
            let (mut exlo, mut exhi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for v in vs {
                for d in 0..2 {
                    exlo[d] = exlo[d].min(v[d]);
                    exhi[d] = exhi[d].max(v[d]);
                }
            }
            let i0 = ((exlo[0] - lo[0]) / cell) as usize;
            let i1 = (((exhi[0] - lo[0]) / cell) as usize).min(nx - 1);
            let j0 = ((exlo[1] - lo[1]) / cell) as usize;
            let j1 = (((exhi[1] - lo[1]) / cell) as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    bins[j * nx + i].push(e);
                }
            }
        }
        PointLocator { mesh, min: lo, cell, nx, ny, bins }
    }

    pub fn locate(&self, p: Point) -> Option<(usize, Point)> {
        let i = ((p[0] - self.min[0]) / self.cell).floor();
        let j = ((p[1] - self.min[1]) / self.cell).floor();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        let (i, j) = (i as usize, j as usize);
        if i >= self.nx || j >= self.ny {
            return None;
        }
        for &e in &self.bins[j * self.nx + i] {
            let map = self.mesh.affine_map(e);
            let xi = map.apply_inverse(p);
            let tol = 1e-12;
            if xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol {
                return Some((e, xi));
            }
        }
        None
    }
}

fn gradient_magnitude(v: &FEFunction, elem: usize, xi: Point) -> f64 {
    let (_, grads) = v.evaluate(elem, xi);
    grads
        .iter()
        .map(|g| g[0] * g[0] + g[1] * g[1])
        .sum::<f64>()
        .sqrt()
}

/// Approximate maximal function of |grad v| at element barycenters: the
/// maximum of the element's own average and ball averages over the dyadic
/// radius ladder h_E, 2 h_E, ... up to the domain diameter, with |grad v|
/// extended by zero outside the domain. Ball averages use a polar grid that
/// reproduces constants exactly.
pub fn maximal_gradient(v: &FEFunction, locator: &PointLocator) -> Vec<f64> {
    let mesh = &v.space.mesh;
    let quad = QuadratureRule::degree(4);
    let diam = mesh.diameter();
    let (nrad, nang) = (6usize, 16usize);
    let mut out = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        // own average
        let mut own = 0.0;
        for (w, xi) in quad.points() {
            own += w * map.det * gradient_magnitude(v, e, xi);
        }
        own /= mesh.element_area(e);
        let mut best = own;
        let bary = mesh.element_barycenter(e);
        let mut rho = mesh.element_diameter(e);
        loop {
            let mut avg = 0.0;
            for i in 0..nrad {
                let s = (i as f64 + 0.5) / nrad as f64;
                let w = 2.0 * s / nrad as f64;
                for j in 0..nang {
                    let th = std::f64::consts::TAU * (j as f64 + 0.5) / nang as f64;
                    let p = [bary[0] + rho * s * th.cos(), bary[1] + rho * s * th.sin()];
                    if let Some((pe, xi)) = locator.locate(p) {
                        avg += w / nang as f64 * gradient_magnitude(v, pe, xi);
                    }
                }
            }
            best = best.max(avg);
            if rho >= diam {
                break;
            }
            rho *= 2.0;
        }
        out.push(best);
    }
    out
}

/// Result of the dyadic layer selection: the truncation level lambda and the
/// pigeonhole bookkeeping behind it.
#[derive(Debug, Clone)]
pub struct LambdaChoice {
    pub j: u32,
    pub layer_index: u64,
    pub lambda: f64,
    pub layer_modular: f64,
    pub total_modular: f64,
}

/// Pick a truncation level by pigeonhole over the 2^j dyadic layers
/// theta_i = (2^j)^i, i = 2^j .. 2^{j+1}-1: some layer carries at most a
/// 2^{-j} share of the total modular. The returned lambda always lies in
/// [(2^j)^{2^j}, (2^{j+1})^{2^{j+1}}).
pub fn select_lambda(maximal: &[f64], modular_weight: &[f64], j: u32) -> LambdaChoice {
    assert_eq!(maximal.len(), modular_weight.len());
    let base = (1u64 << j) as f64;
    let total: f64 = modular_weight.iter().sum();
    let i_lo = 1u64 << j;
    let i_hi = 1u64 << (j + 1);
    let mut best = LambdaChoice {
        j,
        layer_index: i_lo,
        lambda: base.powf(i_lo as f64),
        layer_modular: f64::INFINITY,
        total_modular: total,
    };
    for i in i_lo..i_hi {
        let lo = base.powf(i as f64);
        let hi = base.powf((i + 1) as f64);
        let layer: f64 = maximal
            .iter()
            .zip(modular_weight)
            .filter(|(m, _)| **m >= lo && **m < hi)
            .map(|(_, w)| w)
            .sum();
        if layer <= total / base {
            return LambdaChoice {
                j,
                layer_index: i,
                lambda: lo,
                layer_modular: layer,
                total_modular: total,
            };
        }
        if layer < best.layer_modular {
            best.layer_index = i;
            best.lambda = lo;
            best.layer_modular = layer;
        }
    }
    // cannot happen: 2^j disjoint layers cannot all exceed total/2^j
    best
}

#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub lambda: f64,
    /// final Lipschitz multiplier after doubling
    pub a_final: f64,
    /// sup_e |grad of nodal truncation| / (A lambda)
    pub kappa_nodal: f64,
    /// same for the divergence-projected truncation
    pub kappa_projected: f64,
    pub n_bad_elements: usize,
    pub n_changed_elements: usize,
    /// every changed element lies within two layers of a bad element
    pub containment_ok: bool,
    /// sup over good-core elements of |projected - original|
    pub core_deviation: f64,
}

pub struct TruncationResult {
    /// piecewise-linear truncated field
    pub nodal: FEFunction,
    /// its image under the divergence-preserving projection
    pub projected: FEFunction,
    pub bad_elements: Vec<bool>,
    pub report: TruncationReport,
}

fn dilate(mesh: &Mesh, mask: &[bool], layers: usize) -> Vec<bool> {
    let velems = mesh.vertex_elements();
    let mut cur = mask.to_vec();
    for _ in 0..layers {
        let mut next = cur.clone();
        for e in 0..mesh.n_elements() {
            if !cur[e] {
                continue;
            }
            for &v in &mesh.elements[e] {
                for &ne in &velems[v] {
                    next[ne] = true;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Lipschitz truncation of a zero-trace velocity at level lambda. Nodal
/// stage: vertices of elements where the maximal function exceeds lambda are
/// re-assigned by McShane inf-convolution over trusted vertices (good
/// vertices, plus the boundary with its zero values standing in for the zero
/// extension); the multiplier A starts at 2 and doubles until the truncated
/// gradient is controlled. A divergence-preserving projection then returns
/// the truncation to the velocity space.
pub fn lipschitz_truncate(
    v: &FEFunction,
    q_space: &Arc<FESpace>,
    lambda: f64,
    locator: &PointLocator,
) -> Result<TruncationResult, DiagnosticsError> {
    let v_space = &v.space;
    let mesh = &v_space.mesh;
    let nv = mesh.vertices.len();
    let maximal = maximal_gradient(v, locator);
    let bad_elem: Vec<bool> = maximal.iter().map(|&m| m > lambda).collect();
    let n_bad = bad_elem.iter().filter(|b| **b).count();

    // vertex values of v and good-vertex classification
    let velems = mesh.vertex_elements();
    const REF: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut vertex_vals = vec![[0.0f64; 2]; nv];
    let mut good_vertex = vec![true; nv];
    for (vid, elems) in velems.iter().enumerate() {
        let e = elems[0];
        let li = mesh.elements[e].iter().position(|&g| g == vid).unwrap();
        let vals = v.evaluate(e, REF[li]).0;
        vertex_vals[vid] = [vals[0], vals[1]];
        good_vertex[vid] = elems.iter().all(|&e| !bad_elem[e]);
    }

    // trusted anchors for the inf-convolution: good vertices with their
    // values, and boundary vertices with the zero extension
    let mut anchors: Vec<(Point, [f64; 2])> = Vec::new();
    for vid in 0..nv {
        if good_vertex[vid] && !mesh.boundary_vertex[vid] {
            anchors.push((mesh.vertices[vid], vertex_vals[vid]));
        }
    }
    for vid in 0..nv {
        if mesh.boundary_vertex[vid] {
            anchors.push((mesh.vertices[vid], [0.0, 0.0]));
        }
    }

    // elements whose field gets rebuilt from nodal values: anything touching
    // a replaced (bad) vertex; everything else keeps v verbatim
    let touched: Vec<bool> = (0..mesh.n_elements())
        .map(|e| mesh.elements[e].iter().any(|&v| !good_vertex[v]))
        .collect();

    let p1 = Arc::new(FESpace::new(Arc::clone(mesh), Family::P1, 2));
    let mut a = 2.0;
    let max_doublings = 40;
    let mut nodal = None;
    for _ in 0..max_doublings {
        let mut w = p1.zero_function();
        for vid in 0..nv {
            let val = if mesh.boundary_vertex[vid] {
                [0.0, 0.0]
            } else if good_vertex[vid] {
                vertex_vals[vid]
            } else {
                let x = mesh.vertices[vid];
                let mut out = [f64::INFINITY; 2];
                for (y, val) in &anchors {
                    let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                    for c in 0..2 {
                        out[c] = out[c].min(val[c] + a * lambda * d);
                    }
                }
                if out[0].is_infinite() {
                    [0.0, 0.0]
                } else {
                    out
                }
            };
            for c in 0..2 {
                w.coeffs[p1.global_dof(vid, c)] = val[c];
            }
        }
        // gradient control on the rebuilt region: the truncation must be
        // (c A lambda)-Lipschitz with a moderate geometric constant
        let sup = (0..mesh.n_elements())
            .filter(|&e| touched[e])
            .map(|e| gradient_magnitude(&w, e, [1.0 / 3.0, 1.0 / 3.0]))
            .fold(0.0f64, f64::max);
        if sup <= 16.0 * a * lambda || n_bad == 0 {
            nodal = Some((w, sup));
            break;
        }
        a *= 2.0;
    }
    let (nodal, grad_sup) =
        nodal.ok_or(DiagnosticsError::TruncationUnstable(max_doublings))?;

    let projected = project_div(
        &|e, xi| {
            if touched[e] {
                nodal.evaluate(e, xi).0
            } else {
                v.evaluate(e, xi).0
            }
        },
        v_space,
        q_space,
    )?;

    // changed set and containment inside a dilated bad set
    let quadc = QuadratureRule::degree(4);
    let scale = v.coeff_sup().max(1e-30);
    let mut changed = vec![false; mesh.n_elements()];
    for e in 0..mesh.n_elements() {
        for (_, xi) in quadc.points() {
            let a1 = v.evaluate(e, xi).0;
            let b1 = projected.evaluate(e, xi).0;
            if (a1[0] - b1[0]).abs() + (a1[1] - b1[1]).abs() > 1e-9 * scale {
                changed[e] = true;
                break;
            }
        }
    }
    let halo = dilate(mesh, &bad_elem, 2);
    let containment_ok = changed.iter().zip(&halo).all(|(c, h)| !*c || *h);
    let n_changed = changed.iter().filter(|c| **c).count();

    // deviation on the good core (elements beyond the halo)
    let mut core_deviation: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        if halo[e] {
            continue;
        }
        for (_, xi) in quadc.points() {
            let a1 = v.evaluate(e, xi).0;
            let b1 = projected.evaluate(e, xi).0;
            core_deviation = core_deviation.max((a1[0] - b1[0]).abs() + (a1[1] - b1[1]).abs());
        }
    }

    let mut proj_grad_sup: f64 = 0.0;
    let quadg = QuadratureRule::degree(4);
    for e in 0..mesh.n_elements() {
        for (_, xi) in quadg.points() {
            proj_grad_sup = proj_grad_sup.max(gradient_magnitude(&projected, e, xi));
        }
    }

    let report = TruncationReport {
        lambda,
        a_final: a,
        kappa_nodal: grad_sup / (a * lambda),
        kappa_projected: proj_grad_sup / (a * lambda),
        n_bad_elements: n_bad,
        n_changed_elements: n_changed,
        containment_ok,
        core_deviation,
    };
    Ok(TruncationResult { nodal, projected, bad_elements: bad_elem, report })
}

/// Modular weights int_e |grad v|^{r(x)} dx per element.
pub fn gradient_modular_weights(
    v: &FEFunction,
    r: &ExponentField,
    quad: &QuadratureRule,
) -> Vec<f64> {
    let mesh = &v.space.mesh;
    let mut out = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        let mut s = 0.0;
        for (w, xi) in quad.points() {
            let rx = r.eval(e, xi, map.apply(xi));
            s += w * map.det * gradient_magnitude(v, e, xi).powf(rx);
        }
        out.push(s);
    }
    out
}

#[derive(Debug, Clone)]
pub struct BogovskiiReport {
    /// max_q |<div V, q> - <h, q>| / max_q |<h, q>|
    pub moment_error: f64,
    pub grad_norm: f64,
    pub source_norm: f64,
    /// ||grad V||_{L2} / ||h||_{L2}
    pub ratio: f64,
}

/// Discrete right inverse of the divergence: a zero-trace V with
/// <div V, q> = <h, q> for every discrete pressure q, of minimal gradient
/// energy. `h` must have zero mean.
pub fn discrete_bogovskii(
    h: &dyn Fn(usize, Point) -> f64,
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    quad: &QuadratureRule,
) -> Result<(FEFunction, BogovskiiReport), DiagnosticsError> {
    let mesh = &v_space.mesh;
    let mut g = vec![0.0; q_space.n_dofs()];
    let mut w_int = vec![0.0; q_space.n_dofs()];
    let mut source_l2 = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let hv = h(e, xi);
            source_l2 += wd * hv * hv;
            let (qvals, _) = q_space.family.eval_basis(xi);
            for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                g[dq] += wd * qvals[k] * hv;
                w_int[dq] += wd * qvals[k];
            }
        }
    }
    // a zero-trace field has <div V, 1> = 0 exactly; remove the residual
    // mean the quadrature left in the moment vector so the constraints are
    // compatible and the mean multiplier stays at zero
    let defect: f64 = g.iter().sum::<f64>() / mesh.area();
    for (gi, wi) in g.iter_mut().zip(&w_int) {
        *gi -= defect * wi;
    }
    let v = constrained_velocity_solve(v_space, q_space, &g, quad)?;
    let got = divergence_moments(q_space, &|e, xi| v.evaluate(e, xi).0, quad);
    let scale = g.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
    let moment_error = g
        .iter()
        .zip(&got)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale.max(1.0);
    let mut grad2 = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let gm = gradient_magnitude(&v, e, xi);
            grad2 += w * map.det * gm * gm;
        }
    }
    let grad_norm = grad2.sqrt();
    let source_norm = source_l2.sqrt();
    let report = BogovskiiReport {
        moment_error,
        grad_norm,
        source_norm,
        ratio: grad_norm / source_norm.max(1e-300),
    };
    Ok((v, report))
}

#[derive(Debug, Clone)]
pub struct InfSupReport {
    pub beta: f64,
    pub iterations: usize,
}

/// Inf-sup constant for the r = 2 pairing: beta^2 is the smallest
/// M_p-generalized eigenvalue of the pressure Schur complement B A^{-1} B^T
/// (A the zero-trace vector stiffness), with the constant pressure mode
/// deflated. Computed by inverse iteration through saddle solves.
pub fn infsup_constant(
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    quad: &QuadratureRule,
) -> Result<InfSupReport, DiagnosticsError> {
    let mesh = &v_space.mesh;
    let n_vel = v_space.n_dofs();
    let n_press = q_space.n_dofs();
    let n = n_vel + n_press + 1;

    let mut saddle = Triplets::new(n, n);
    let mut mass = Triplets::new(n_press, n_press);
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let (_, vgrads_ref) = v_space.family.eval_basis(xi);
            let vgrads: Vec<Point> = vgrads_ref
                .iter()
                .map(|&gr| map.grad_to_physical(gr))
                .collect();
            let (qvals, _) = q_space.family.eval_basis(xi);
            for (a, &da) in v_space.elem_dofs[e].iter().enumerate() {
                for (b, &db) in v_space.elem_dofs[e].iter().enumerate() {
                    let lap = vgrads[a][0] * vgrads[b][0] + vgrads[a][1] * vgrads[b][1];
                    for c in 0..2 {
                        saddle.push(
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
                        saddle.push(row, n_vel + dq, qvals[k] * div_a * wd);
                        saddle.push(n_vel + dq, row, qvals[k] * div_a * wd);
                    }
                }
            }
            for (k1, &d1) in q_space.elem_dofs[e].iter().enumerate() {
                for (k2, &d2) in q_space.elem_dofs[e].iter().enumerate() {
                    mass.push(d1, d2, qvals[k1] * qvals[k2] * wd);
                }
                saddle.push(n_vel + d1, n_vel + n_press, qvals[k1] * wd);
                saddle.push(n_vel + n_press, n_vel + d1, qvals[k1] * wd);
            }
        }
    }
    let bc: std::collections::HashMap<usize, f64> =
        v_space.boundary_dofs().into_iter().map(|d| (d, 0.0)).collect();
    let mut rhs0 = vec![0.0; n];
    constrain_system(&mut saddle, &mut rhs0, &bc);
    let saddle = saddle.finalize().factorize()?;
    let mass = mass.finalize();

    // M-orthogonal deflation of the constant pressure mode
    let ones = vec![1.0; n_press];
    let m_ones = mass.matvec(&ones);
    let ones_m_ones: f64 = m_ones.iter().sum();
    let deflate = |y: &mut [f64]| {
        let c: f64 = y.iter().zip(&m_ones).map(|(a, b)| a * b).sum::<f64>() / ones_m_ones;
        for (v, o) in y.iter_mut().zip(&ones) {
            *v -= c * o;
        }
    };
    let m_dot = |a: &[f64], b: &[f64]| -> f64 {
        let mb = mass.matvec(b);
        a.iter().zip(&mb).map(|(x, y)| x * y).sum()
    };

    let mut y: Vec<f64> = (0..n_press)
        .map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5)
        .collect();
    deflate(&mut y);
    let ym = m_dot(&y, &y).sqrt();
    for v in y.iter_mut() {
        *v /= ym;
    }

    // inverse iteration converges geometrically in the eigenvalue gap, which
    // narrows under refinement; Aitken extrapolation of the estimate
    // sequence removes the geometric tail
    let max_iter = 2000;
    let mut history: Vec<f64> = Vec::new();
    let mut aitken_prev = f64::INFINITY;
    for it in 0..max_iter {
        // z = S^{-1} M y through one saddle solve with rhs (0, -M y, 0)
        let my = mass.matvec(&y);
        let mut rhs = vec![0.0; n];
        for (i, v) in my.iter().enumerate() {
            rhs[n_vel + i] = -v;
        }
        let sol = saddle.solve(&rhs);
        let mut z = sol[n_vel..n_vel + n_press].to_vec();
        deflate(&mut z);
        // eigenvalue estimate from the inverse step: S z = M y, so
        // lambda ~ <y, M y> / <z, M y>
        let num = m_dot(&y, &y);
        let den: f64 = z.iter().zip(&my).map(|(a, b)| a * b).sum();
        let lambda = num / den;
        let zm = m_dot(&z, &z).sqrt();
        for v in z.iter_mut() {
            *v /= zm;
        }
        y = z;
        history.push(lambda);
        let k = history.len();
        if k >= 3 {
            let (l0, l1, l2) = (history[k - 3], history[k - 2], history[k - 1]);
            let d2 = l2 - 2.0 * l1 + l0;
            let aitken = if d2.abs() > 1e-300 {
                l2 - (l2 - l1) * (l2 - l1) / d2
            } else {
                l2
            };
            let plain_ok = (l2 - l1).abs() <= 1e-9 * l2.abs();
            let aitken_ok = (aitken - aitken_prev).abs() <= 1e-10 * aitken.abs()
                && (aitken - l2).abs() <= 1e-5 * l2.abs();
            if aitken > 0.0 && (plain_ok || aitken_ok) {
                return Ok(InfSupReport { beta: aitken.sqrt(), iterations: it + 1 });
            }
            aitken_prev = aitken;
        }
    }
    Err(DiagnosticsError::InfSupStalled(max_iter))
}

/// Dictionary lower bound for the variable-exponent inf-sup constant:
/// for each candidate pressure q with zero mean, the right inverse V of its
/// divergence problem gives sup_v <q, div v> / (||grad v||_r ||q||_{r'})
/// >= <q, q> / (||grad V||_r ||q||_{r'}); the minimum over the dictionary
/// estimates the infimum.
pub fn infsup_dictionary_bound(
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    r: &ExponentField,
    quad: &QuadratureRule,
) -> Result<f64, DiagnosticsError> {
    let mesh = &v_space.mesh;
    let rc = r.conjugate();
    let mut bound = f64::INFINITY;
    for k in 1..=4usize {
        let kf = k as f64 * std::f64::consts::PI;
        let raw = move |p: Point| match k {
            1 => (kf * p[0]).cos(),
            2 => (kf * p[1]).cos(),
            3 => (kf * p[0]).sin() * (kf * p[1]).sin() - 4.0 / (kf * kf),
            _ => p[0] - 0.5,
        };
        // subtract the mean so the candidate is admissible
        let mut mean = 0.0;
        for e in 0..mesh.n_elements() {
            let map = mesh.affine_map(e);
            for (w, xi) in quad.points() {
                mean += w * map.det * raw(map.apply(xi));
            }
        }
        mean /= mesh.area();
        let q = move |e: usize, xi: Point| raw(mesh.affine_map(e).apply(xi)) - mean;

        let (v, _) = discrete_bogovskii(&q, v_space, q_space, quad)?;
        let mut qq = 0.0;
        for e in 0..mesh.n_elements() {
            let map = mesh.affine_map(e);
            for (w, xi) in quad.points() {
                qq += w * map.det * q(e, xi).powi(2);
            }
        }
        let grad_r = luxemburg_norm(mesh, quad, &|e, xi, _| gradient_magnitude(&v, e, xi), r);
        let q_rc = luxemburg_norm(mesh, quad, &|e, xi, _| q(e, xi), &rc);
        bound = bound.min(qq / (grad_r * q_rc).max(1e-300));
    }
    Ok(bound)
}

#[derive(Debug, Clone)]
pub struct HolderReport {
    pub alpha: f64,
    pub quotient: f64,
    pub probes: usize,
}

/// Interior Hoelder quotient sup |f(x) - f(y)| / |x - y|^alpha over a fixed
/// probe lattice inside the margin, so values are comparable across meshes.
pub fn holder_quotient(
    f: &FEFunction,
    alpha: f64,
    margin: f64,
    nprobe: usize,
    locator: &PointLocator,
) -> HolderReport {
    let mesh = &f.space.mesh;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &mesh.vertices {
        for d in 0..2 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for i in 0..nprobe {
        for j in 0..nprobe {
            let t = [
                margin + (1.0 - 2.0 * margin) * i as f64 / (nprobe - 1) as f64,
                margin + (1.0 - 2.0 * margin) * j as f64 / (nprobe - 1) as f64,
            ];
            let p = [
                lo[0] + t[0] * (hi[0] - lo[0]),
                lo[1] + t[1] * (hi[1] - lo[1]),
            ];
            if let Some((e, xi)) = locator.locate(p) {
                pts.push(p);
                vals.push(f.evaluate(e, xi).0[0]);
            }
        }
    }
    let mut quotient: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            if d > 1e-14 {
                quotient = quotient.max((vals[i] - vals[j]).abs() / d.powf(alpha));
            }
        }
    }
    HolderReport { alpha, quotient, probes: pts.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::DEFAULT_ORDER;
    use crate::fespace::{build_spaces, Pairing};
    use crate::mesh::Mesh;

    fn refined(levels: usize) -> Arc<Mesh> {
        let mut m = Mesh::unit_square();
        for _ in 0..levels {
            m = m.refine_uniform();
        }
        Arc::new(m)
    }

    #[test]
    fn locator_roundtrip() {
        let mesh = refined(3);
        let locator = PointLocator::new(Arc::clone(&mesh));
        for e in (0..mesh.n_elements()).step_by(7) {
            let map = mesh.affine_map(e);
            let p = map.apply([0.21, 0.34]);
            let (fe, xi) = locator.locate(p).unwrap();
            let q = mesh.affine_map(fe).apply(xi);
            assert!((p[0] - q[0]).abs() + (p[1] - q[1]).abs() < 1e-12);
        }
        assert!(locator.locate([2.0, 2.0]).is_none());
        assert!(locator.locate([-0.1, 0.5]).is_none());
    }

    #[test]
    fn maximal_function_of_linear_field_is_exact() {
        let mesh = refined(2);
        let (v_sp, _, _) = build_spaces(&mesh, Pairing::P2P0);
        let v = v_sp.interpolate(&|p| vec![2.0 * p[0] + p[1], -p[0] + 0.5 * p[1]]);
        // |grad v|_F = sqrt(4 + 1 + 1 + 0.25)
        let want = 6.25f64.sqrt();
        let locator = PointLocator::new(Arc::clone(&mesh));
        let m = maximal_gradient(&v, &locator);
        for (e, got) in m.iter().enumerate() {
            assert!((got - want).abs() < 1e-10, "elem {e}: {got} vs {want}");
        }
    }

    #[test]
    fn select_lambda_pigeonhole_bounds() {
        // synthetic maximal values spanning many dyadic layers
        let n = 4096;
        let maximal: Vec<f64> = (0..n).map(|i| 1.5f64.powi((i % 60) as i32)).collect();
        let weights: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let total: f64 = weights.iter().sum();
        for j in 1..=3u32 {
            let choice = select_lambda(&maximal, &weights, j);
            let base = (1u64 << j) as f64;
            assert!(choice.lambda >= base.powf(base));
            let next_base = (1u64 << (j + 1)) as f64;
            assert!(choice.lambda < next_base.powf(next_base));
            assert!(
                choice.layer_modular <= total / base + 1e-12,
                "j={j}: {} > {}",
                choice.layer_modular,
                total / base
            );
            assert!(choice.layer_index >= 1 << j && choice.layer_index < 1 << (j + 1));
        }
    }

    #[test]
    fn truncation_identity_above_sup() {
        let mesh = refined(2);
        let (v_sp, q_sp, _) = build_spaces(&mesh, Pairing::P2P0);
        let v = v_sp.interpolate(&|p| {
            let b = p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
            vec![b, -b]
        });
        let locator = PointLocator::new(Arc::clone(&mesh));
        let m = maximal_gradient(&v, &locator);
        let lambda = 2.0 * m.iter().cloned().fold(0.0, f64::max);
        let res = lipschitz_truncate(&v, &q_sp, lambda, &locator).unwrap();
        assert_eq!(res.report.n_bad_elements, 0);
        // nothing above the level: projection of v itself
        let maxdiff = v
            .coeffs
            .iter()
            .zip(&res.projected.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(maxdiff < 1e-9, "{maxdiff}");
    }

    #[test]
    fn truncation_tames_a_spike() {
        let mesh = refined(3);
        let (v_sp, q_sp, _) = build_spaces(&mesh, Pairing::P2P0);
        // smooth background plus a sharp interior spike
        let mut v = v_sp.interpolate(&|p| {
            let b = p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
            vec![b, 0.5 * b]
        });
        // locate an interior vertex dof near the center and kick it
        let mut spike = None;
        for (d, pt) in v_sp.dof_points.iter().enumerate() {
            if (pt[0] - 0.5).abs() < 0.01 && (pt[1] - 0.5).abs() < 0.01 {
                spike = Some(d);
                break;
            }
        }
        let spike = spike.unwrap();
        v.coeffs[v_sp.global_dof(spike, 0)] += 50.0;
        let locator = PointLocator::new(Arc::clone(&mesh));
        let m = maximal_gradient(&v, &locator);
        // pick a level between the background and the spike
        let lambda = 20.0;
        assert!(m.iter().any(|&x| x > lambda));
        assert!(m.iter().any(|&x| x < lambda));
        let res = lipschitz_truncate(&v, &q_sp, lambda, &locator).unwrap();
        assert!(res.report.n_bad_elements > 0);
        assert!(res.report.containment_ok);
        assert!(
            res.report.core_deviation < 1e-9,
            "core deviation {}",
            res.report.core_deviation
        );
        // gradient of the truncation is controlled by A lambda
        assert!(res.report.kappa_nodal <= 16.0);
        // truncation kept the zero trace
        for d in v_sp.boundary_dofs() {
            assert!(res.projected.coeffs[d].abs() < 1e-12);
        }
        // and the spike is gone: sup of the truncated gradient far below
        // the original's
        let orig_sup = (0..mesh.n_elements())
            .map(|e| gradient_magnitude(&v, e, [0.3, 0.3]))
            .fold(0.0f64, f64::max);
        let trunc_sup = (0..mesh.n_elements())
            .map(|e| gradient_magnitude(&res.projected, e, [0.3, 0.3]))
            .fold(0.0f64, f64::max);
        assert!(trunc_sup < orig_sup / 3.0, "{trunc_sup} vs {orig_sup}");
    }

    #[test]
    fn bogovskii_matches_moments_and_is_stable() {
        let quad = QuadratureRule::degree(DEFAULT_ORDER);
        let mut ratios = Vec::new();
        for lvl in 1..=3 {
            let mesh = refined(lvl);
            let (v_sp, q_sp, _) = build_spaces(&mesh, Pairing::P2P0);
            let h = |e: usize, xi: Point| {
                let p = mesh.affine_map(e).apply(xi);
                (std::f64::consts::PI * p[0]).cos()
            };
            let (_, rep) = discrete_bogovskii(&h, &v_sp, &q_sp, &quad).unwrap();
            assert!(rep.moment_error < 1e-9, "level {lvl}: {}", rep.moment_error);
            ratios.push(rep.ratio);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min <= 2.0, "ratios {ratios:?}");
    }

    #[test]
    fn infsup_stable_both_pairings() {
        let quad = QuadratureRule::degree(DEFAULT_ORDER);
        for pairing in [Pairing::P2P0, Pairing::CrouzeixRaviart] {
            let mut betas = Vec::new();
            for lvl in 1..=3 {
                let mesh = refined(lvl);
                let (v_sp, q_sp, _) = build_spaces(&mesh, pairing);
                let rep = infsup_constant(&v_sp, &q_sp, &quad).unwrap();
                assert!(rep.beta > 0.05 && rep.beta < 2.0, "{pairing:?}: {}", rep.beta);
                betas.push(rep.beta);
            }
            let max = betas.iter().cloned().fold(0.0, f64::max);
            let min = betas.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min / max >= 0.5, "{pairing:?}: betas {betas:?}");
        }
    }

    #[test]
    fn infsup_dictionary_bound_positive_and_stable() {
        let quad = QuadratureRule::degree(DEFAULT_ORDER);
        let r = ExponentField::Analytic(Arc::new(|p| 1.6 + 0.2 * p[0]));
        let mut bounds = Vec::new();
        for lvl in 1..=2 {
            let mesh = refined(lvl);
            let (v_sp, q_sp, _) = build_spaces(&mesh, Pairing::P2P0);
            let b = infsup_dictionary_bound(&v_sp, &q_sp, &r, &quad).unwrap();
            assert!(b > 0.0);
            bounds.push(b);
        }
        let max = bounds.iter().cloned().fold(0.0, f64::max);
        let min = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min <= 4.0, "bounds {bounds:?}");
    }

    #[test]
    fn holder_quotient_of_smooth_function_stabilizes() {
        let mut quotients = Vec::new();
        for lvl in 2..=4 {
            let mesh = refined(lvl);
            let (_, _, z_sp) = build_spaces(&mesh, Pairing::P2P0);
            let f = z_sp.interpolate(&|p| {
                vec![(2.0 * p[0]).sin() * (3.0 * p[1]).cos()]
            });
            let locator = PointLocator::new(Arc::clone(&mesh));
            let rep = holder_quotient(&f, 0.25, 0.25, 9, &locator);
            assert_eq!(rep.probes, 81);
            quotients.push(rep.quotient);
        }
        let max = quotients.iter().cloned().fold(0.0, f64::max);
        let min = quotients.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max - min) / max <= 0.25, "quotients {quotients:?}");
    }
}
