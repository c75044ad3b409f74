//! End-to-end drivers: coupled solves with solution output, convergence
//! studies against manufactured solutions, and diagnostics sweeps. All
//! tabular output is deterministic CSV.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble_momentum_matrix, Linearization, MomentumState, QuadratureRule,
};
use crate::config::{Config, ConfigError};
use crate::diagnostics::{
    discrete_bogovskii, gradient_modular_weights, holder_quotient, infsup_constant,
    infsup_dictionary_bound, lipschitz_truncate, maximal_gradient, select_lambda,
    DiagnosticsError, PointLocator,
};
use crate::fespace::{build_spaces, FEFunction, FESpace, Pairing};
use crate::mesh::{Mesh, Point};
use crate::mms::{self, Manufactured, MmsError};
use crate::physics::{FluxParams, StressParams};
use crate::projections::{projection_constants, ProjectionError};
use crate::solver::{
    divergence_defect, energy_report, solve_coupled, CoupledProblem, SolverError,
};
use crate::varexp::ExponentField;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Mms(#[from] MmsError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error(transparent)]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("solution file {0}: {1}")]
    BadSolution(PathBuf, String),
    #[error("unknown diagnostic `{0}` (expected infsup, truncation, bogovskii, projections, or holder)")]
    UnknownDiagnostic(String),
}

fn zero_vec(_: Point) -> [f64; 2] {
    [0.0, 0.0]
}

fn zero_scalar(_: Point) -> f64 {
    0.0
}

// ---------------------------------------------------------------------------
// coupled run with solution output

/// JSON side of the solution container; coefficients live in a flat binary
/// file of little-endian f64, velocity then pressure then concentration.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionHeader {
    pub pairing: String,
    pub n_vertices: usize,
    pub n_elements: usize,
    pub n_velocity: usize,
    pub n_pressure: usize,
    pub n_concentration: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub divergence_defect: f64,
    pub dissipation: f64,
    pub identity_gap: f64,
}

pub struct RunArtifacts {
    pub header: SolutionHeader,
    pub files: Vec<PathBuf>,
}

pub fn run(config: &Config, out_dir: Option<&Path>) -> Result<RunArtifacts, HarnessError> {
    let mesh = Arc::new(config.build_mesh()?);
    let pairing = config.pairing()?;
    let (v_sp, q_sp, z_sp) = build_spaces(&mesh, pairing);
    let stress = config.stress_params()?;
    let flux = config.flux_params()?;
    let solver_cfg = config.solver_config();
    let quad = QuadratureRule::degree(solver_cfg.quad_order);

    let velocity_data = config.velocity_field()?;
    let concentration_data = config.concentration_field()?;
    let forcing = config.forcing_field()?;
    let source = config.concentration_source_field()?;

    let vel_fn: Box<dyn Fn(Point) -> [f64; 2]> = match &velocity_data {
        Some(f) => {
            let f = f.clone();
            Box::new(move |p| f.at(p))
        }
        None => Box::new(zero_vec),
    };
    let conc_fn: Box<dyn Fn(Point) -> f64> = match &concentration_data {
        Some(f) => {
            let f = f.clone();
            Box::new(move |p| f.at(p))
        }
        None => Box::new(zero_scalar),
    };
    let force_fn: Box<dyn Fn(Point) -> [f64; 2]> = match &forcing {
        Some(f) => {
            let f = f.clone();
            Box::new(move |p| f.at(p))
        }
        None => Box::new(zero_vec),
    };
    let source_fn: Option<Box<dyn Fn(Point) -> f64>> = source.map(|f| {
        let b: Box<dyn Fn(Point) -> f64> = Box::new(move |p| f.at(p));
        b
    });

    let problem = CoupledProblem {
        stress: &stress,
        flux: &flux,
        forcing: &*force_fn,
        velocity_data: &*vel_fn,
        concentration_data: &*conc_fn,
        concentration_source: source_fn.as_deref(),
    };
    let sol = solve_coupled(&v_sp, &q_sp, &z_sp, &problem, &solver_cfg)?;

    let r = ExponentField::Composed {
        law: stress.law.clone(),
        concentration: sol.concentration.clone(),
        clamp: stress.clamp,
    };
    let energy = energy_report(
        &sol.velocity,
        &sol.concentration,
        &stress,
        &flux,
        &*force_fn,
        &r,
        &quad,
    )?;
    let defect = divergence_defect(&sol.velocity, &q_sp, &quad);

    let header = SolutionHeader {
        pairing: config.pairing.clone(),
        n_vertices: mesh.vertices.len(),
        n_elements: mesh.n_elements(),
        n_velocity: sol.velocity.coeffs.len(),
        n_pressure: sol.pressure.coeffs.len(),
        n_concentration: sol.concentration.coeffs.len(),
        outer_iterations: sol.report.outer_iterations,
        converged: sol.report.converged,
        divergence_defect: defect,
        dissipation: energy.dissipation,
        identity_gap: energy.identity_gap,
    };

    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();

    let header_path = dir.join("solution.json");
    std::fs::write(&header_path, serde_json::to_string_pretty(&header)?)?;
    files.push(header_path);

    let bin_path = dir.join("solution.bin");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&bin_path)?);
        for block in [&sol.velocity.coeffs, &sol.pressure.coeffs, &sol.concentration.coeffs] {
            for v in block.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    files.push(bin_path);

    if config.output.matrix_market {
        let state = MomentumState {
            velocity: &sol.velocity,
            pressure: &sol.pressure,
            concentration: &sol.concentration,
            stress: &stress,
            forcing: &*force_fn,
        };
        let system = assemble_momentum_matrix(&state, Linearization::Picard, &quad)?;
        let mtx_path = dir.join("momentum.mtx");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&mtx_path)?);
        system.matrix.finalize().write_matrix_market(&mut w)?;
        files.push(mtx_path);
    }

    Ok(RunArtifacts { header, files })
}

/// Read back a solution container written by `run`.
pub fn load_solution(dir: &Path) -> Result<(SolutionHeader, Vec<f64>), HarnessError> {
    let header_path = dir.join("solution.json");
    let header: SolutionHeader = serde_json::from_str(&std::fs::read_to_string(&header_path)?)?;
    let bytes = std::fs::read(dir.join("solution.bin"))?;
    let expected = header.n_velocity + header.n_pressure + header.n_concentration;
    if bytes.len() != expected * 8 {
        return Err(HarnessError::BadSolution(
            dir.join("solution.bin"),
            format!("expected {} coefficients, found {} bytes", expected, bytes.len()),
        ));
    }
    let coeffs = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, coeffs))
}

// ---------------------------------------------------------------------------
// convergence study against a manufactured solution

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub level: usize,
    pub h_max: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    pub concentration_h1: f64,
    pub outer_iterations: usize,
    pub max_momentum_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<StudyRow>,
}

impl ConvergenceTable {
    /// observed orders log2(e_{k-1} / e_k) for the three error columns
    pub fn orders(&self) -> Vec<[f64; 3]> {
        self.rows
            .windows(2)
            .map(|w| {
                [
                    (w[0].velocity_h1 / w[1].velocity_h1).log2(),
                    (w[0].pressure_l2 / w[1].pressure_l2).log2(),
                    (w[0].concentration_h1 / w[1].concentration_h1).log2(),
                ]
            })
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(
            "level,h_max,velocity_h1,pressure_l2,concentration_h1,outer_iterations,max_momentum_iterations\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}\n",
                r.level,
                r.h_max,
                r.velocity_h1,
                r.pressure_l2,
                r.concentration_h1,
                r.outer_iterations,
                r.max_momentum_iterations
            ));
        }
        out
    }
}

/// H1-seminorm velocity error, L2 pressure error (after matching means), and
/// H1 concentration error against the closed-form fields.
fn manufactured_errors(
    exact: &Manufactured,
    velocity: &FEFunction,
    pressure: &FEFunction,
    concentration: &FEFunction,
    quad: &QuadratureRule,
) -> (f64, f64, f64) {
    let mesh = &velocity.space.mesh;
    // the discrete pressure has zero mean; shift the exact one to match
    let mut p_mean = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            p_mean += w * map.det * exact.pressure(map.apply(xi));
        }
    }
    p_mean /= mesh.area();

    let (mut vel2, mut press2, mut conc2) = (0.0, 0.0, 0.0);
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let wd = w * map.det;
            let p = map.apply(xi);
            let (_, ugrad) = velocity.evaluate(e, xi);
            let gexact = exact.velocity_gradient(p);
            for comp in 0..2 {
                for d in 0..2 {
                    let diff = ugrad[comp][d] - gexact[comp][d];
                    vel2 += wd * diff * diff;
                }
            }
            let (pv, _) = pressure.evaluate(e, xi);
            let dp = pv[0] - (exact.pressure(p) - p_mean);
            press2 += wd * dp * dp;
            let (cv, cgrad) = concentration.evaluate(e, xi);
            let dc = cv[0] - exact.concentration(p);
            conc2 += wd * dc * dc;
            let gc = exact.concentration_gradient(p);
            for d in 0..2 {
                let diff = cgrad[0][d] - gc[d];
                conc2 += wd * diff * diff;
            }
        }
    }
    (vel2.sqrt(), press2.sqrt(), conc2.sqrt())
}

pub fn convergence_study(
    config: &Config,
    levels: &[usize],
) -> Result<ConvergenceTable, HarnessError> {
    let stress = config.stress_params()?;
    let flux = config.flux_params()?;
    let exact = mms::default_benchmark(&stress, &flux)?;
    convergence_study_on(config, levels, &exact)
}

/// Convergence study against a caller-supplied manufactured solution.
pub fn convergence_study_on(
    config: &Config,
    levels: &[usize],
    exact: &Manufactured,
) -> Result<ConvergenceTable, HarnessError> {
    let pairing = config.pairing()?;
    let stress = config.stress_params()?;
    let flux = config.flux_params()?;
    let solver_cfg = config.solver_config();
    let quad = QuadratureRule::degree(solver_cfg.quad_order + 2);

    let mut rows = Vec::new();
    for &level in levels {
        let mut mesh = config.build_mesh()?;
        for _ in 0..level {
            mesh = mesh.refine_uniform();
        }
        let mesh = Arc::new(mesh);
        let (v_sp, q_sp, z_sp) = build_spaces(&mesh, pairing);
        let forcing = |p: Point| exact.forcing_at(p);
        let vel_data = |p: Point| exact.velocity(p);
        let conc_data = |p: Point| exact.concentration(p);
        let source = |p: Point| exact.source_at(p);
        let problem = CoupledProblem {
            stress: &stress,
            flux: &flux,
            forcing: &forcing,
            velocity_data: &vel_data,
            concentration_data: &conc_data,
            concentration_source: Some(&source),
        };
        let sol = solve_coupled(&v_sp, &q_sp, &z_sp, &problem, &solver_cfg)?;
        let (vel_h1, press_l2, conc_h1) =
            manufactured_errors(exact, &sol.velocity, &sol.pressure, &sol.concentration, &quad);
        rows.push(StudyRow {
            level,
            h_max: mesh.h_max(),
            velocity_h1: vel_h1,
            pressure_l2: press_l2,
            concentration_h1: conc_h1,
            outer_iterations: sol.report.outer_iterations,
            max_momentum_iterations: sol
                .report
                .momentum_iterations
                .iter()
                .copied()
                .max()
                .unwrap_or(0),
        });
    }
    Ok(ConvergenceTable { rows })
}

// ---------------------------------------------------------------------------
// diagnostics sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    InfSup,
    Truncation,
    Bogovskii,
    Projections,
    Holder,
}

impl Diagnostic {
    pub fn parse(tag: &str) -> Result<Diagnostic, HarnessError> {
        match tag {
            "infsup" => Ok(Diagnostic::InfSup),
            "truncation" => Ok(Diagnostic::Truncation),
            "bogovskii" => Ok(Diagnostic::Bogovskii),
            "projections" => Ok(Diagnostic::Projections),
            "holder" => Ok(Diagnostic::Holder),
            other => Err(HarnessError::UnknownDiagnostic(other.to_string())),
        }
    }
}

fn spaces_at_level(
    config: &Config,
    level: usize,
) -> Result<(Arc<Mesh>, Arc<FESpace>, Arc<FESpace>, Arc<FESpace>, Pairing), HarnessError> {
    let mut mesh = config.build_mesh()?;
    for _ in 0..level {
        mesh = mesh.refine_uniform();
    }
    let mesh = Arc::new(mesh);
    let pairing = config.pairing()?;
    let (v, q, z) = build_spaces(&mesh, pairing);
    Ok((mesh, v, q, z, pairing))
}

/// Exponent field used by mesh-only diagnostics: the exponent law composed
/// with the configured concentration data (or its midpoint when absent).
fn analytic_exponent(config: &Config) -> Result<ExponentField, HarnessError> {
    let stress = config.stress_params()?;
    let clamp = stress.clamp;
    match config.concentration_field()? {
        Some(field) => {
            let law = stress.law.clone();
            Ok(ExponentField::Analytic(Arc::new(move |p| {
                let margin = 0.01 * (clamp.1 - clamp.0);
                let c = field.at(p).clamp(clamp.0 + margin, clamp.1 - margin);
                law.eval(c)
            })))
        }
        None => Ok(ExponentField::Constant(
            stress.law.eval(0.5 * (clamp.0 + clamp.1)),
        )),
    }
}

/// Solve the configured coupled problem at the given refinement level.
fn solve_at_level(
    config: &Config,
    level: usize,
) -> Result<
    (
        Arc<Mesh>,
        Arc<FESpace>,
        Arc<FESpace>,
        Arc<FESpace>,
        crate::solver::CoupledSolution,
        StressParams,
        FluxParams,
    ),
    HarnessError,
> {
    let (mesh, v_sp, q_sp, z_sp, _) = spaces_at_level(config, level)?;
    let stress = config.stress_params()?;
    let flux = config.flux_params()?;
    let solver_cfg = config.solver_config();
    let velocity_data = config.velocity_field()?;
    let concentration_data = config.concentration_field()?;
    let forcing = config.forcing_field()?;
    let vel_fn: Box<dyn Fn(Point) -> [f64; 2]> = match velocity_data {
        Some(f) => Box::new(move |p| f.at(p)),
        None => Box::new(zero_vec),
    };
    let conc_fn: Box<dyn Fn(Point) -> f64> = match concentration_data {
        Some(f) => Box::new(move |p| f.at(p)),
        None => Box::new(zero_scalar),
    };
    let force_fn: Box<dyn Fn(Point) -> [f64; 2]> = match forcing {
        Some(f) => Box::new(move |p| f.at(p)),
        None => Box::new(zero_vec),
    };
    let problem = CoupledProblem {
        stress: &stress,
        flux: &flux,
        forcing: &*force_fn,
        velocity_data: &*vel_fn,
        concentration_data: &*conc_fn,
        concentration_source: None,
    };
    let sol = solve_coupled(&v_sp, &q_sp, &z_sp, &problem, &solver_cfg)?;
    Ok((mesh, v_sp, q_sp, z_sp, sol, stress, flux))
}

/// Run one diagnostic across refinement levels; returns CSV text with one
/// row per level (or per level and truncation index j).
pub fn diagnose(
    config: &Config,
    which: Diagnostic,
    levels: &[usize],
) -> Result<String, HarnessError> {
    let quad = QuadratureRule::degree(config.solver_config().quad_order);
    let mut out = String::new();
    match which {
        Diagnostic::InfSup => {
            out.push_str("level,h_max,beta,iterations,dictionary_bound\n");
            let r = analytic_exponent(config)?;
            for &level in levels {
                let (mesh, v_sp, q_sp, _, _) = spaces_at_level(config, level)?;
                let rep = infsup_constant(&v_sp, &q_sp, &quad)?;
                let dict = infsup_dictionary_bound(&v_sp, &q_sp, &r, &quad)?;
                out.push_str(&format!(
                    "{},{:.12e},{:.12e},{},{:.12e}\n",
                    level,
                    mesh.h_max(),
                    rep.beta,
                    rep.iterations,
                    dict
                ));
            }
        }
        Diagnostic::Bogovskii => {
            out.push_str("level,h_max,moment_error,grad_norm,source_norm,ratio\n");
            for &level in levels {
                let (mesh, v_sp, q_sp, _, _) = spaces_at_level(config, level)?;
                let m2 = Arc::clone(&mesh);
                let h = move |e: usize, xi: Point| {
                    let p = m2.affine_map(e).apply(xi);
                    (std::f64::consts::PI * p[0]).cos()
                };
                let (_, rep) = discrete_bogovskii(&h, &v_sp, &q_sp, &quad)?;
                out.push_str(&format!(
                    "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    level,
                    mesh.h_max(),
                    rep.moment_error,
                    rep.grad_norm,
                    rep.source_norm,
                    rep.ratio
                ));
            }
        }
        Diagnostic::Projections => {
            out.push_str("level,h_max,div_ratio_max,q_ratio_max,z_ratio_max,locality_max\n");
            let r = analytic_exponent(config)?;
            for &level in levels {
                let (mesh, v_sp, q_sp, z_sp, _) = spaces_at_level(config, level)?;
                let rep = projection_constants(&v_sp, &q_sp, &z_sp, &r, &quad)?;
                out.push_str(&format!(
                    "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    level,
                    mesh.h_max(),
                    rep.div_ratio_max,
                    rep.q_ratio_max,
                    rep.z_ratio_max,
                    rep.locality_max
                ));
            }
        }
        Diagnostic::Truncation => {
            out.push_str(
                "level,j,lambda,layer_modular,total_modular,a_final,kappa_nodal,kappa_projected,n_bad,n_changed,containment_ok\n",
            );
            for &level in levels {
                let (mesh, v_sp, q_sp, _, sol, stress, _) = solve_at_level(config, level)?;
                let _ = v_sp;
                let r = ExponentField::Composed {
                    law: stress.law.clone(),
                    concentration: sol.concentration.clone(),
                    clamp: stress.clamp,
                };
                let locator = PointLocator::new(Arc::clone(&mesh));
                let maximal = maximal_gradient(&sol.velocity, &locator);
                let weights = gradient_modular_weights(&sol.velocity, &r, &quad);
                for j in 1..=3u32 {
                    let choice = select_lambda(&maximal, &weights, j);
                    let res =
                        lipschitz_truncate(&sol.velocity, &q_sp, choice.lambda, &locator)?;
                    out.push_str(&format!(
                        "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}\n",
                        level,
                        j,
                        choice.lambda,
                        choice.layer_modular,
                        choice.total_modular,
                        res.report.a_final,
                        res.report.kappa_nodal,
                        res.report.kappa_projected,
                        res.report.n_bad_elements,
                        res.report.n_changed_elements,
                        res.report.containment_ok
                    ));
                }
            }
        }
        Diagnostic::Holder => {
            out.push_str("level,h_max,alpha,quotient,probes\n");
            for &level in levels {
                let (mesh, _, _, _, sol, _, _) = solve_at_level(config, level)?;
                let locator = PointLocator::new(Arc::clone(&mesh));
                let rep = holder_quotient(&sol.concentration, 0.25, 0.25, 9, &locator);
                out.push_str(&format!(
                    "{},{:.12e},{:.12e},{:.12e},{}\n",
                    level,
                    mesh.h_max(),
                    rep.alpha,
                    rep.quotient,
                    rep.probes
                ));
            }
        }
    }
    Ok(out)
}

/// One-line-per-item mesh summary.
pub fn mesh_info(config: &Config) -> Result<String, HarnessError> {
    let mesh = config.build_mesh()?;
    Ok(format!(
        "vertices: {}\nelements: {}\nboundary edges: {}\ninterior+boundary edges: {}\nh_max: {:.6e}\narea: {:.12e}\nshape regularity: {:.4}\n",
        mesh.vertices.len(),
        mesh.n_elements(),
        mesh.boundary_edges.len(),
        mesh.edges.len(),
        mesh.h_max(),
        mesh.area(),
        mesh.shape_regularity()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn driven_config() -> Config {
        Config::from_str(
            r#"{
            "mesh": {"builtin": "unit_square", "levels": 2},
            "stress": {"nu0": 1.0, "kappa1": 1.0, "kappa2": 1.0},
            "exponent": {"type": "rational", "a": 1.8, "b": 0.2},
            "flux": {"k0": 1.0, "k1": 0.5},
            "velocity_data": ["sin(pi*x)^2 * 2*pi*sin(pi*y)*cos(pi*y)",
                              "-2*pi*sin(pi*x)*cos(pi*x)*sin(pi*y)^2"],
            "concentration_data": "0.5 + 0.25*sin(pi*x)*sin(pi*y)",
            "solver": {"max_picard": 60}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn run_writes_and_reloads_solution() {
        let dir = std::env::temp_dir().join(format!("synfem-harness-{}", std::process::id()));
        let cfg = driven_config();
        let arts = run(&cfg, Some(&dir)).unwrap();
        assert!(arts.header.converged);
        assert!(arts.header.divergence_defect < 1e-8);
        let (header, coeffs) = load_solution(&dir).unwrap();
        assert_eq!(
            coeffs.len(),
            header.n_velocity + header.n_pressure + header.n_concentration
        );
        assert!(coeffs.iter().all(|v| v.is_finite()));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn matrix_market_dump_is_parseable() {
        let dir = std::env::temp_dir().join(format!("synfem-mtx-{}", std::process::id()));
        let mut cfg = driven_config();
        cfg.output.matrix_market = true;
        let arts = run(&cfg, Some(&dir)).unwrap();
        assert!(arts.files.iter().any(|f| f.ends_with("momentum.mtx")));
        let text = std::fs::read_to_string(dir.join("momentum.mtx")).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn convergence_study_newtonian_orders() {
        let cfg = Config::from_str(
            r#"{
            "mesh": {"builtin": "unit_square", "levels": 0},
            "exponent": {"type": "constant", "value": 2.0},
            "flux": {"k0": 1.0, "k1": 0.0}
        }"#,
        )
        .unwrap();
        let table = convergence_study(&cfg, &[1, 2, 3]).unwrap();
        assert_eq!(table.rows.len(), 3);
        let orders = table.orders();
        let last = orders.last().unwrap();
        assert!(last[0] > 1.5, "velocity order {}", last[0]);
        assert!(last[1] > 0.7, "pressure order {}", last[1]);
        assert!(last[2] > 0.8, "concentration order {}", last[2]);
        let csv = table.csv();
        assert!(csv.starts_with("level,h_max,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn diagnose_emits_csv() {
        let cfg = Config::from_str(
            r#"{
            "mesh": {"builtin": "unit_square", "levels": 0},
            "exponent": {"type": "rational", "a": 1.8, "b": 0.2},
            "concentration_data": "0.5 + 0.25*sin(pi*x)"
        }"#,
        )
        .unwrap();
        let csv = diagnose(&cfg, Diagnostic::Bogovskii, &[1, 2]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let csv = diagnose(&cfg, Diagnostic::InfSup, &[1]).unwrap();
        assert!(csv.lines().nth(1).unwrap().split(',').count() == 5);
    }

    #[test]
    fn mesh_info_reports_counts() {
        let cfg = Config::from_str(r#"{"mesh": {"builtin": "unit_square", "levels": 1}}"#).unwrap();
        let info = mesh_info(&cfg).unwrap();
        assert!(info.contains("vertices: 9"));
        assert!(info.contains("elements: 8"));
    }

    #[test]
    fn unknown_diagnostic_is_rejected() {
        assert!(Diagnostic::parse("spectral").is_err());
        assert!(Diagnostic::parse("holder").is_ok());
    }
}
