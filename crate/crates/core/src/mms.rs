//! Manufactured solutions: a tiny symbolic expression tree with exact
//! differentiation, used to derive the momentum forcing and concentration
//! source that make a chosen (u*, p*, c*) an exact solution of the coupled
//! system.

use std::fmt;
use std::sync::Arc;

use crate::mesh::Point;
use crate::physics::{FluxParams, StressParams};
use crate::varexp::ScalarExponentLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone)]
pub enum Expr {
    Const(f64),
    Coord(Var),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    /// general power with expression exponent: a^b = exp(b ln a)
    Pow(Arc<Expr>, Arc<Expr>),
    Ln(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Neg(Arc<Expr>),
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Coord(Var::X) => write!(f, "x"),
            Expr::Coord(Var::Y) => write!(f, "y"),
            Expr::Add(a, b) => write!(f, "({a:?} + {b:?})"),
            Expr::Sub(a, b) => write!(f, "({a:?} - {b:?})"),
            Expr::Mul(a, b) => write!(f, "({a:?} * {b:?})"),
            Expr::Div(a, b) => write!(f, "({a:?} / {b:?})"),
            Expr::Pow(a, b) => write!(f, "({a:?} ^ {b:?})"),
            Expr::Ln(a) => write!(f, "ln({a:?})"),
            Expr::Sin(a) => write!(f, "sin({a:?})"),
            Expr::Cos(a) => write!(f, "cos({a:?})"),
            Expr::Neg(a) => write!(f, "-({a:?})"),
        }
    }
}

pub fn c(v: f64) -> Arc<Expr> {
    Arc::new(Expr::Const(v))
}
pub fn x() -> Arc<Expr> {
    Arc::new(Expr::Coord(Var::X))
}
pub fn y() -> Arc<Expr> {
    Arc::new(Expr::Coord(Var::Y))
}
pub fn add(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    match (&**a, &**b) {
        (Expr::Const(p), Expr::Const(q)) => c(p + q),
        (Expr::Const(z), _) if *z == 0.0 => Arc::clone(b),
        (_, Expr::Const(z)) if *z == 0.0 => Arc::clone(a),
        _ => Arc::new(Expr::Add(Arc::clone(a), Arc::clone(b))),
    }
}
pub fn sub(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    match (&**a, &**b) {
        (Expr::Const(p), Expr::Const(q)) => c(p - q),
        (_, Expr::Const(z)) if *z == 0.0 => Arc::clone(a),
        _ => Arc::new(Expr::Sub(Arc::clone(a), Arc::clone(b))),
    }
}
pub fn mul(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    match (&**a, &**b) {
        (Expr::Const(p), Expr::Const(q)) => c(p * q),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if *z == 0.0 => c(0.0),
        (Expr::Const(o), _) if *o == 1.0 => Arc::clone(b),
        (_, Expr::Const(o)) if *o == 1.0 => Arc::clone(a),
        _ => Arc::new(Expr::Mul(Arc::clone(a), Arc::clone(b))),
    }
}
pub fn div(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    match (&**a, &**b) {
        (Expr::Const(z), _) if *z == 0.0 => c(0.0),
        (_, Expr::Const(o)) if *o == 1.0 => Arc::clone(a),
        _ => Arc::new(Expr::Div(Arc::clone(a), Arc::clone(b))),
    }
}
pub fn pow(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
    Arc::new(Expr::Pow(Arc::clone(a), Arc::clone(b)))
}
pub fn ln(a: &Arc<Expr>) -> Arc<Expr> {
    Arc::new(Expr::Ln(Arc::clone(a)))
}
pub fn sin(a: &Arc<Expr>) -> Arc<Expr> {
    Arc::new(Expr::Sin(Arc::clone(a)))
}
pub fn cos(a: &Arc<Expr>) -> Arc<Expr> {
    Arc::new(Expr::Cos(Arc::clone(a)))
}
pub fn neg(a: &Arc<Expr>) -> Arc<Expr> {
    match &**a {
        Expr::Const(p) => c(-p),
        _ => Arc::new(Expr::Neg(Arc::clone(a))),
    }
}

impl Expr {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Coord(Var::X) => p[0],
            Expr::Coord(Var::Y) => p[1],
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, b) => a.eval(p).powf(b.eval(p)),
            Expr::Ln(a) => a.eval(p).ln(),
            Expr::Sin(a) => a.eval(p).sin(),
            Expr::Cos(a) => a.eval(p).cos(),
            Expr::Neg(a) => -a.eval(p),
        }
    }
}

/// Exact partial derivative; Pow uses
/// d(a^b) = a^b (b' ln a + b a' / a).
pub fn diff(e: &Arc<Expr>, v: Var) -> Arc<Expr> {
    match &**e {
        Expr::Const(_) => c(0.0),
        Expr::Coord(w) => c(if *w == v { 1.0 } else { 0.0 }),
        Expr::Add(a, b) => add(&diff(a, v), &diff(b, v)),
        Expr::Sub(a, b) => sub(&diff(a, v), &diff(b, v)),
        Expr::Mul(a, b) => add(&mul(&diff(a, v), b), &mul(a, &diff(b, v))),
        Expr::Div(a, b) => div(
            &sub(&mul(&diff(a, v), b), &mul(a, &diff(b, v))),
            &mul(b, b),
        ),
        Expr::Pow(a, b) => {
            let term = add(&mul(&diff(b, v), &ln(a)), &div(&mul(b, &diff(a, v)), a));
            mul(e, &term)
        }
        Expr::Ln(a) => div(&diff(a, v), a),
        Expr::Sin(a) => mul(&cos(a), &diff(a, v)),
        Expr::Cos(a) => neg(&mul(&sin(a), &diff(a, v))),
        Expr::Neg(a) => neg(&diff(a, v)),
    }
}

/// A manufactured exact solution of the coupled system, with the forcing and
/// source terms derived symbolically from the constitutive laws.
pub struct Manufactured {
    pub u: [Arc<Expr>; 2],
    pub p: Arc<Expr>,
    pub conc: Arc<Expr>,
    pub grad_u: [[Arc<Expr>; 2]; 2],
    pub grad_c: [Arc<Expr>; 2],
    pub forcing: [Arc<Expr>; 2],
    pub conc_source: Arc<Expr>,
}

#[derive(Debug, thiserror::Error)]
pub enum MmsError {
    #[error("manufactured velocity is not solenoidal: |div u|({0:?}) = {1:e}")]
    NotSolenoidal(Point, f64),
    #[error("only the rational exponent law has a closed form for manufacturing")]
    UnsupportedLaw,
}

fn exponent_expr(law: &ScalarExponentLaw, conc: &Arc<Expr>) -> Result<Arc<Expr>, MmsError> {
    match law {
        ScalarExponentLaw::Rational { a, b } => Ok(add(
            &c(*a),
            &div(&mul(&c(*b), conc), &add(&c(1.0), conc)),
        )),
        ScalarExponentLaw::Table(_) => Err(MmsError::UnsupportedLaw),
    }
}

/// Derive forcing f = -div S(c*, Du*) + (u*.grad) u* + grad p* and source
/// g = u*.grad c* - div(K(|Du*|) grad c*). The velocity must be solenoidal;
/// this is checked by differentiating div u* exactly and sampling it.
pub fn manufacture(
    u: [Arc<Expr>; 2],
    p: Arc<Expr>,
    conc: Arc<Expr>,
    stress: &StressParams,
    flux: &FluxParams,
) -> Result<Manufactured, MmsError> {
    let grad_u = [
        [diff(&u[0], Var::X), diff(&u[0], Var::Y)],
        [diff(&u[1], Var::X), diff(&u[1], Var::Y)],
    ];
    // solenoidality check: exact derivative, dense sampling
    let divu = add(&grad_u[0][0], &grad_u[1][1]);
    for i in 0..40 {
        for j in 0..40 {
            let pt = [(i as f64 + 0.5) / 40.0, (j as f64 + 0.5) / 40.0];
            let d = divu.eval(pt).abs();
            if d > 1e-10 {
                return Err(MmsError::NotSolenoidal(pt, d));
            }
        }
    }

    let du = [
        [
            grad_u[0][0].clone(),
            mul(&c(0.5), &add(&grad_u[0][1], &grad_u[1][0])),
        ],
        [
            mul(&c(0.5), &add(&grad_u[0][1], &grad_u[1][0])),
            grad_u[1][1].clone(),
        ],
    ];
    let du_sq = {
        let mut s = c(0.0);
        for row in &du {
            for v in row {
                s = add(&s, &mul(v, v));
            }
        }
        s
    };
    let r = exponent_expr(&stress.law, &conc)?;
    let nu = mul(
        &c(stress.nu0),
        &pow(
            &add(&c(stress.kappa1), &mul(&c(stress.kappa2), &du_sq)),
            &mul(&c(0.5), &sub(&r, &c(2.0))),
        ),
    );
    let s_tensor = [
        [mul(&nu, &du[0][0]), mul(&nu, &du[0][1])],
        [mul(&nu, &du[1][0]), mul(&nu, &du[1][1])],
    ];

    let mut forcing = [c(0.0), c(0.0)];
    for i in 0..2 {
        let div_s = add(&diff(&s_tensor[i][0], Var::X), &diff(&s_tensor[i][1], Var::Y));
        let convection = add(
            &mul(&u[0], &grad_u[i][0]),
            &mul(&u[1], &grad_u[i][1]),
        );
        let dp = diff(&p, if i == 0 { Var::X } else { Var::Y });
        forcing[i] = add(&sub(&convection, &div_s), &dp);
    }

    let grad_c = [diff(&conc, Var::X), diff(&conc, Var::Y)];
    // the tiny shift keeps the symbolic derivative of |Du| finite at
    // isolated zeros of the gradient (0/0 otherwise); the perturbation is
    // far below quadrature accuracy
    let du_norm = pow(&add(&du_sq, &c(1e-30)), &c(0.5));
    let k = add(&c(flux.k0), &div(&c(flux.k1), &add(&c(1.0), &du_norm)));
    let diffusive = add(
        &diff(&mul(&k, &grad_c[0]), Var::X),
        &diff(&mul(&k, &grad_c[1]), Var::Y),
    );
    let advective = add(&mul(&u[0], &grad_c[0]), &mul(&u[1], &grad_c[1]));
    let conc_source = sub(&advective, &diffusive);

    Ok(Manufactured {
        u,
        p,
        conc,
        grad_u,
        grad_c,
        forcing,
        conc_source,
    })
}

impl Manufactured {
    pub fn velocity(&self, p: Point) -> [f64; 2] {
        [self.u[0].eval(p), self.u[1].eval(p)]
    }
    pub fn velocity_gradient(&self, p: Point) -> [[f64; 2]; 2] {
        [
            [self.grad_u[0][0].eval(p), self.grad_u[0][1].eval(p)],
            [self.grad_u[1][0].eval(p), self.grad_u[1][1].eval(p)],
        ]
    }
    pub fn pressure(&self, p: Point) -> f64 {
        self.p.eval(p)
    }
    pub fn concentration(&self, p: Point) -> f64 {
        self.conc.eval(p)
    }
    pub fn concentration_gradient(&self, p: Point) -> [f64; 2] {
        [self.grad_c[0].eval(p), self.grad_c[1].eval(p)]
    }
    pub fn forcing_at(&self, p: Point) -> [f64; 2] {
        [self.forcing[0].eval(p), self.forcing[1].eval(p)]
    }
    pub fn source_at(&self, p: Point) -> f64 {
        self.conc_source.eval(p)
    }
}

/// Stream-function velocity: u = (d psi / dy, -d psi / dx) is solenoidal by
/// construction.
pub fn stream_velocity(psi: &Arc<Expr>) -> [Arc<Expr>; 2] {
    [diff(psi, Var::Y), neg(&diff(psi, Var::X))]
}

/// Default smooth zero-trace benchmark solution on the unit square:
/// psi = sin^2(pi x) sin^2(pi y), p = sin(pi x) cos(pi y) (zero mean),
/// c = 1/2 + 1/4 sin(pi x) sin(pi y) (constant 1/2 on the boundary).
pub fn default_benchmark(
    stress: &StressParams,
    flux: &FluxParams,
) -> Result<Manufactured, MmsError> {
    let pi = c(std::f64::consts::PI);
    let sx = sin(&mul(&pi, &x()));
    let sy = sin(&mul(&pi, &y()));
    let psi = mul(&mul(&sx, &sx), &mul(&sy, &sy));
    let u = stream_velocity(&psi);
    let p = mul(&sx, &cos(&mul(&pi, &y())));
    let conc = add(&c(0.5), &mul(&c(0.25), &mul(&sx, &sy)));
    manufacture(u, p, conc, stress, flux)
}

/// Low-degree polynomial benchmark with inhomogeneous boundary data:
/// psi = x^4 + y^4 gives u = (4y^3, -4x^3), p = x^3 + y^3,
/// c = 1/2 + 1/4 xy. The small high-order seminorms put even coarse meshes
/// in the asymptotic convergence regime.
pub fn cubic_benchmark(
    stress: &StressParams,
    flux: &FluxParams,
) -> Result<Manufactured, MmsError> {
    let x4 = mul(&mul(&x(), &x()), &mul(&x(), &x()));
    let y4 = mul(&mul(&y(), &y()), &mul(&y(), &y()));
    let psi = add(&x4, &y4);
    let u = stream_velocity(&psi);
    let p = add(&mul(&mul(&x(), &x()), &x()), &mul(&mul(&y(), &y()), &y()));
    let conc = add(&c(0.5), &mul(&c(0.25), &mul(&x(), &y())));
    manufacture(u, p, conc, stress, flux)
}
