//! Nonlinear solves: damped Picard (optionally switching to Newton) for the
//! momentum saddle system, the linear concentration solve, and the
//! alternating coupled iteration, with energy diagnostics.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{
    assemble_concentration, assemble_momentum_matrix, assemble_momentum_residual,
    trilinear_bu, AssemblyError, Linearization, MomentumState, QuadratureRule, DEFAULT_ORDER,
};
use crate::fespace::{constrain_system, FEFunction, FESpace};
use crate::linalg::LinalgError;
use crate::mesh::Point;
use crate::physics::{FluxParams, StressParams};
use crate::varexp::{sobolev_norm_1r, ExponentField};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("momentum iteration did not reach {tol:e} in {iters} steps (residual {residual:e})")]
    MomentumDiverged { tol: f64, iters: usize, residual: f64 },
    #[error("coupled iteration did not reach {tol:e} in {iters} steps (increment {increment:e})")]
    CoupledDiverged { tol: f64, iters: usize, increment: f64 },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// relative residual target of the momentum iteration
    pub picard_tol: f64,
    pub max_picard: usize,
    /// increment target of the outer velocity/concentration alternation
    pub outer_tol: f64,
    pub max_outer: usize,
    /// switch to Newton once the relative residual drops below this
    pub newton_threshold: Option<f64>,
    /// residual-increase damping: halve the step at most this many times
    pub max_damping: usize,
    pub quad_order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            picard_tol: 1e-8,
            max_picard: 50,
            outer_tol: 1e-8,
            max_outer: 50,
            newton_threshold: None,
            max_damping: 5,
            quad_order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MomentumReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub newton_steps: usize,
}

fn free_residual_norm(res: &[f64], constrained: &HashMap<usize, f64>) -> f64 {
    res.iter()
        .enumerate()
        .filter(|(i, _)| !constrained.contains_key(i))
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Solve the momentum system for a frozen concentration. `dirichlet` maps
/// global velocity dofs to boundary values; the initial iterate carries the
/// boundary data and increments are constrained to zero there.
pub fn solve_momentum(
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    stress: &StressParams,
    concentration: &FEFunction,
    forcing: &dyn Fn(Point) -> [f64; 2],
    dirichlet: &HashMap<usize, f64>,
    initial: Option<(FEFunction, FEFunction)>,
    config: &SolverConfig,
) -> Result<(FEFunction, FEFunction, MomentumReport), SolverError> {
    let quad = QuadratureRule::degree(config.quad_order);
    let n_vel = v_space.n_dofs();
    let n_press = q_space.n_dofs();
    let n = n_vel + n_press + 1;

    let (mut u, mut p) = initial
        .unwrap_or_else(|| (v_space.zero_function(), q_space.zero_function()));
    for (&d, &val) in dirichlet {
        u.coeffs[d] = val;
    }
    let mut lambda = 0.0;

    // int q dx per pressure dof, for the zero-mean multiplier coupling
    let mesh = &v_space.mesh;
    let mut pmass = vec![0.0; n_press];
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let (qvals, _) = q_space.family.eval_basis(xi);
            for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                pmass[dq] += w * map.det * qvals[k];
            }
        }
    }

    let augmented_residual = |u: &FEFunction, p: &FEFunction, lambda: f64| -> Result<Vec<f64>, SolverError> {
        let state = MomentumState {
            velocity: u,
            pressure: p,
            concentration,
            stress,
            forcing,
        };
        let mut res = assemble_momentum_residual(&state, &quad)?;
        for (dq, m) in pmass.iter().enumerate() {
            res[n_vel + dq] += m * lambda;
        }
        Ok(res)
    };

    let constrained: HashMap<usize, f64> = dirichlet.keys().map(|&d| (d, 0.0)).collect();
    let mut report = MomentumReport::default();
    let mut res = augmented_residual(&u, &p, lambda)?;
    let mut res_norm = free_residual_norm(&res, &constrained);
    // convergence scale from the data, independent of any warm start: the
    // residual at the boundary-lifted zero state
    let scale = {
        let mut u0 = v_space.zero_function();
        for (&d, &val) in dirichlet {
            u0.coeffs[d] = val;
        }
        let r0 = augmented_residual(&u0, &q_space.zero_function(), 0.0)?;
        free_residual_norm(&r0, &constrained).max(1e-30)
    };
    report.residuals.push(res_norm);

    for it in 0..config.max_picard {
        if res_norm <= config.picard_tol * scale {
            report.converged = true;
            break;
        }
        let lin = match config.newton_threshold {
            Some(th) if res_norm <= th * scale => {
                report.newton_steps += 1;
                Linearization::Newton
            }
            _ => Linearization::Picard,
        };
        let state = MomentumState {
            velocity: &u,
            pressure: &p,
            concentration,
            stress,
            forcing,
        };
        let sys = assemble_momentum_matrix(&state, lin, &quad)?;
        let mut tri = sys.matrix;
        let mut rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        constrain_system(&mut tri, &mut rhs, &constrained);
        let delta = tri.finalize().factorize()?.solve(&rhs);

        // damped update: halve the step while the residual increases
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=config.max_damping {
            let mut u2 = u.clone();
            let mut p2 = p.clone();
            for i in 0..n_vel {
                u2.coeffs[i] += alpha * delta[i];
            }
            for i in 0..n_press {
                p2.coeffs[i] += alpha * delta[n_vel + i];
            }
            let l2 = lambda + alpha * delta[n - 1];
            let res2 = augmented_residual(&u2, &p2, l2)?;
            let norm2 = free_residual_norm(&res2, &constrained);
            if norm2 < res_norm || alpha <= 1.0 / (1 << config.max_damping) as f64 {
                u = u2;
                p = p2;
                lambda = l2;
                res = res2;
                res_norm = norm2;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        debug_assert!(accepted);
        report.iterations = it + 1;
        report.residuals.push(res_norm);
    }
    if !report.converged && res_norm > config.picard_tol * scale {
        return Err(SolverError::MomentumDiverged {
            tol: config.picard_tol,
            iters: report.iterations,
            residual: res_norm / scale,
        });
    }
    Ok((u, p, report))
}

/// Linear concentration solve for a frozen velocity, with Dirichlet data
/// interpolated on boundary dofs.
pub fn solve_concentration(
    velocity: &FEFunction,
    z_space: &Arc<FESpace>,
    flux: &FluxParams,
    boundary_data: &dyn Fn(Point) -> f64,
    source: Option<&dyn Fn(Point) -> f64>,
    config: &SolverConfig,
) -> Result<FEFunction, SolverError> {
    let quad = QuadratureRule::degree(config.quad_order);
    let dirichlet: HashMap<usize, f64> = z_space
        .boundary_dofs()
        .into_iter()
        .map(|d| (d, boundary_data(z_space.dof_points[d])))
        .collect();
    let sys = assemble_concentration(velocity, z_space, flux, &dirichlet, source, &quad)?;
    let sol = sys.matrix.finalize().factorize()?.solve(&sys.rhs);
    Ok(FEFunction::from_coeffs(Arc::clone(z_space), sol))
}

/// Energy-balance diagnostics of a coupled state.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// int S(C, DU) : DU
    pub dissipation: f64,
    /// int f . U
    pub work: f64,
    /// |dissipation + B_u[U,U,U] - work|, zero at a discrete solution with
    /// homogeneous velocity data
    pub identity_gap: f64,
    /// int |DU|^{r(x)}
    pub du_modular: f64,
    /// int K(|DU|) |grad C|^2
    pub conc_dissipation: f64,
    /// sup-norm of the concentration coefficients
    pub conc_sup: f64,
}

pub fn energy_report(
    velocity: &FEFunction,
    concentration: &FEFunction,
    stress: &StressParams,
    flux: &FluxParams,
    forcing: &dyn Fn(Point) -> [f64; 2],
    r: &ExponentField,
    quad: &QuadratureRule,
) -> Result<EnergyReport, SolverError> {
    let mesh = &velocity.space.mesh;
    let mut dissipation = 0.0;
    let mut work = 0.0;
    let mut du_modular = 0.0;
    let mut conc_dissipation = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let (uval, ugrad) = velocity.evaluate(e, xi);
            let (cval, cgrad) = concentration.evaluate(e, xi);
            let du = [
                [ugrad[0][0], 0.5 * (ugrad[0][1] + ugrad[1][0])],
                [0.5 * (ugrad[0][1] + ugrad[1][0]), ugrad[1][1]],
            ];
            let s = stress.stress(cval[0], du);
            dissipation += wd * crate::physics::tensor_dot(&s, &du);
            let f = forcing(map.apply(xi));
            work += wd * (f[0] * uval[0] + f[1] * uval[1]);
            let rx = r.eval(e, xi, map.apply(xi));
            du_modular += wd * crate::physics::tensor_norm(&du).powf(rx);
            let k = flux.conductivity(crate::physics::tensor_norm(&du));
            conc_dissipation += wd * k * (cgrad[0][0] * cgrad[0][0] + cgrad[0][1] * cgrad[0][1]);
        }
    }
    let bu = trilinear_bu(velocity, velocity, velocity, quad)?;
    Ok(EnergyReport {
        dissipation,
        work,
        identity_gap: (dissipation + bu - work).abs(),
        du_modular,
        conc_dissipation,
        conc_sup: concentration.coeff_sup(),
    })
}

#[derive(Debug, Clone)]
pub struct CoupledReport {
    pub outer_iterations: usize,
    pub increments: Vec<f64>,
    pub momentum_iterations: Vec<usize>,
    pub converged: bool,
}

pub struct CoupledSolution {
    pub velocity: FEFunction,
    pub pressure: FEFunction,
    pub concentration: FEFunction,
    pub report: CoupledReport,
}

/// Problem data for the coupled flow/transport solve. Velocity boundary data
/// is interpolated on boundary dofs; concentration data likewise.
pub struct CoupledProblem<'a> {
    pub stress: &'a StressParams,
    pub flux: &'a FluxParams,
    pub forcing: &'a dyn Fn(Point) -> [f64; 2],
    pub velocity_data: &'a dyn Fn(Point) -> [f64; 2],
    pub concentration_data: &'a dyn Fn(Point) -> f64,
    /// optional manufactured source for the concentration equation
    pub concentration_source: Option<&'a dyn Fn(Point) -> f64>,
}

/// Alternating fixed point: start from the lifted concentration data, then
/// repeat (momentum solve with frozen exponent field, concentration solve
/// with frozen velocity) until the combined increment is small.
pub fn solve_coupled(
    v_space: &Arc<FESpace>,
    q_space: &Arc<FESpace>,
    z_space: &Arc<FESpace>,
    problem: &CoupledProblem,
    config: &SolverConfig,
) -> Result<CoupledSolution, SolverError> {
    let quad = QuadratureRule::degree(config.quad_order);
    let mesh = &v_space.mesh;

    let vel_dirichlet: HashMap<usize, f64> = {
        let mut m = HashMap::new();
        for d in v_space.boundary_dofs() {
            let scalar = d / v_space.components;
            let comp = d % v_space.components;
            m.insert(d, (problem.velocity_data)(v_space.dof_points[scalar])[comp]);
        }
        m
    };

    // C_1: boundary data lifted into the full P1 space (interior nodes too)
    let mut conc = z_space.interpolate(&|p| vec![(problem.concentration_data)(p)]);
    let mut velocity = v_space.zero_function();
    let mut pressure = q_space.zero_function();

    let mut report = CoupledReport {
        outer_iterations: 0,
        increments: Vec::new(),
        momentum_iterations: Vec::new(),
        converged: false,
    };

    let r_minus = {
        let r = ExponentField::Composed {
            law: problem.stress.law.clone(),
            concentration: conc.clone(),
            clamp: problem.stress.clamp,
        };
        r.range(mesh, &quad).0
    };
    let norm_r = ExponentField::Constant(r_minus.max(1.01));
    let norm_2 = ExponentField::Constant(2.0);

    for it in 0..config.max_outer {
        let (u_new, p_new, mrep) = solve_momentum(
            v_space,
            q_space,
            problem.stress,
            &conc,
            problem.forcing,
            &vel_dirichlet,
            Some((velocity.clone(), pressure.clone())),
            config,
        )?;
        report.momentum_iterations.push(mrep.iterations);

        let c_new = solve_concentration(
            &u_new,
            z_space,
            problem.flux,
            problem.concentration_data,
            problem.concentration_source,
            config,
        )?;

        let du = FEFunction::from_coeffs(
            Arc::clone(v_space),
            u_new
                .coeffs
                .iter()
                .zip(&velocity.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        );
        let dc = FEFunction::from_coeffs(
            Arc::clone(z_space),
            c_new
                .coeffs
                .iter()
                .zip(&conc.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        );
        let increment = sobolev_norm_1r(mesh, &quad, &du, &norm_r)
            + sobolev_norm_1r(mesh, &quad, &dc, &norm_2);
        report.increments.push(increment);
        report.outer_iterations = it + 1;

        velocity = u_new;
        pressure = p_new;
        conc = c_new;

        let scale = 1.0
            + sobolev_norm_1r(mesh, &quad, &velocity, &norm_r)
            + sobolev_norm_1r(mesh, &quad, &conc, &norm_2);
        if increment <= config.outer_tol * scale {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        return Err(SolverError::CoupledDiverged {
            tol: config.outer_tol,
            iters: report.outer_iterations,
            increment: *report.increments.last().unwrap_or(&f64::NAN),
        });
    }
    Ok(CoupledSolution { velocity, pressure, concentration: conc, report })
}

/// Max over pressure dofs of |<div U, q>| / ||q||_{L2}, the discrete
/// divergence defect of a velocity field.
pub fn divergence_defect(
    velocity: &FEFunction,
    q_space: &Arc<FESpace>,
    quad: &QuadratureRule,
) -> f64 {
    let mesh = &velocity.space.mesh;
    let mut moments = vec![0.0; q_space.n_dofs()];
    let mut qnorm2 = vec![0.0; q_space.n_dofs()];
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let (_, ugrad) = velocity.evaluate(e, xi);
            let div_u = ugrad[0][0] + ugrad[1][1];
            let (qvals, _) = q_space.family.eval_basis(xi);
            for (k, &dq) in q_space.elem_dofs[e].iter().enumerate() {
                moments[dq] += wd * qvals[k] * div_u;
                qnorm2[dq] += wd * qvals[k] * qvals[k];
            }
        }
    }
    moments
        .iter()
        .zip(&qnorm2)
        .map(|(m, n)| m.abs() / n.sqrt().max(1e-300))
        .fold(0.0, f64::max)
}
