//! Variable-exponent Lebesgue machinery: exponent fields r(x), the modular
//! rho_r(f) = int |f|^{r(x)} dx, the Luxemburg norm, conjugate exponents,
//! and numerical witnesses for the log-Hoelder averaging estimate.

use std::sync::Arc;

use thiserror::Error;

use crate::assembly::QuadratureRule;
use crate::fespace::FEFunction;
use crate::mesh::{Mesh, Point};

#[derive(Debug, Error)]
pub enum VarexpError {
    #[error("exponent out of admissible range (1, inf): {0}")]
    BadExponent(f64),
    #[error("exponent table must be nonempty and sorted by concentration")]
    BadTable,
    #[error("Luxemburg bisection failed to bracket: modular stays {0}")]
    NoBracket(f64),
}

/// Map from a concentration value to a power-law exponent r(c).
#[derive(Debug, Clone)]
pub enum ScalarExponentLaw {
    /// r(c) = a + b c / (1 + c)
    Rational { a: f64, b: f64 },
    /// monotone piecewise-linear interpolation through (c_i, r_i),
    /// clamped at the ends
    Table(Vec<(f64, f64)>),
}

impl ScalarExponentLaw {
    pub fn validate(&self) -> Result<(), VarexpError> {
        match self {
            ScalarExponentLaw::Rational { a, b } => {
                // range over c >= 0 is [a, a+b) for b >= 0
                if *a <= 1.0 || a + b <= 1.0 {
                    return Err(VarexpError::BadExponent(a.min(a + b)));
                }
                Ok(())
            }
            ScalarExponentLaw::Table(rows) => {
                if rows.is_empty() || rows.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(VarexpError::BadTable);
                }
                if let Some(&(_, r)) = rows.iter().find(|&&(_, r)| r <= 1.0) {
                    return Err(VarexpError::BadExponent(r));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, c: f64) -> f64 {
        match self {
            ScalarExponentLaw::Rational { a, b } => a + b * c / (1.0 + c),
            ScalarExponentLaw::Table(rows) => {
                if c <= rows[0].0 {
                    return rows[0].1;
                }
                if c >= rows[rows.len() - 1].0 {
                    return rows[rows.len() - 1].1;
                }
                let k = rows.partition_point(|&(ci, _)| ci <= c) - 1;
                let (c0, r0) = rows[k];
                let (c1, r1) = rows[k + 1];
                r0 + (r1 - r0) * (c - c0) / (c1 - c0)
            }
        }
    }
}

/// A spatially varying exponent r(x) on a mesh.
#[derive(Clone)]
pub enum ExponentField {
    Constant(f64),
    /// r(x) = law(C(x)) for a finite-element concentration C,
    /// with C clamped into the stated admissible interval first
    Composed {
        law: ScalarExponentLaw,
        concentration: FEFunction,
        clamp: (f64, f64),
    },
    /// one exponent per element
    PiecewiseConstant(Vec<f64>),
    Analytic(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
    /// pointwise conjugate r'(x) = r(x)/(r(x)-1)
    Conjugate(Box<ExponentField>),
}

impl std::fmt::Debug for ExponentField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExponentField::Constant(r) => write!(f, "Constant({r})"),
            ExponentField::Composed { law, clamp, .. } => {
                write!(f, "Composed {{ law: {law:?}, clamp: {clamp:?} }}")
            }
            ExponentField::PiecewiseConstant(v) => {
                write!(f, "PiecewiseConstant(len {})", v.len())
            }
            ExponentField::Analytic(_) => write!(f, "Analytic"),
            ExponentField::Conjugate(inner) => write!(f, "Conjugate({inner:?})"),
        }
    }
}

impl ExponentField {
    /// Evaluate at a reference point of an element; `phys` is the physical
    /// image of that point (precomputed by the caller).
    pub fn eval(&self, elem: usize, refpt: Point, phys: Point) -> f64 {
        match self {
            ExponentField::Constant(r) => *r,
            ExponentField::Composed { law, concentration, clamp } => {
                let c = concentration.evaluate(elem, refpt).0[0];
                law.eval(c.clamp(clamp.0, clamp.1))
            }
            ExponentField::PiecewiseConstant(v) => v[elem],
            ExponentField::Analytic(f) => f(phys),
            ExponentField::Conjugate(inner) => {
                let r = inner.eval(elem, refpt, phys);
                r / (r - 1.0)
            }
        }
    }

    pub fn conjugate(&self) -> ExponentField {
        match self {
            ExponentField::Constant(r) => ExponentField::Constant(r / (r - 1.0)),
            ExponentField::Conjugate(inner) => (**inner).clone(),
            other => ExponentField::Conjugate(Box::new(other.clone())),
        }
    }

    /// (r_minus, r_plus) sampled at quadrature points of every element.
    pub fn range(&self, mesh: &Mesh, quad: &QuadratureRule) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in 0..mesh.n_elements() {
            let map = mesh.affine_map(e);
            for (_, xi) in quad.points() {
                let r = self.eval(e, xi, map.apply(xi));
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    }

    /// Minimum of r over one element (sampled), the "local exponent" used by
    /// element-local estimates.
    pub fn local_exponent(&self, mesh: &Mesh, elem: usize, quad: &QuadratureRule) -> f64 {
        let map = mesh.affine_map(elem);
        let mut lo = f64::INFINITY;
        // include vertices so piecewise-linear exponents attain their minimum
        for xi in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] {
            lo = lo.min(self.eval(elem, xi, map.apply(xi)));
        }
        for (_, xi) in quad.points() {
            lo = lo.min(self.eval(elem, xi, map.apply(xi)));
        }
        lo
    }

    /// Empirical log-Hoelder constant: sup |r(x)-r(y)| * (-log|x-y|) over
    /// random point pairs with |x-y| <= 1/2.
    pub fn log_holder_estimate(&self, mesh: &Mesh, samples: usize, seed: u64) -> f64 {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ne = mesh.n_elements();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let e = rng.gen_range(0..ne);
            let mut a: f64 = rng.gen();
            let mut b: f64 = rng.gen();
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            let xi = [a, b];
            let map = mesh.affine_map(e);
            (e, xi, map.apply(xi))
        };
        let mut sup: f64 = 0.0;
        for _ in 0..samples {
            let (e1, xi1, p1) = draw(&mut rng);
            let (e2, xi2, p2) = draw(&mut rng);
            let d = ((p1[0] - p2[0]).powi(2) + (p1[1] - p2[1]).powi(2)).sqrt();
            if d <= 1e-12 || d > 0.5 {
                continue;
            }
            let dr = (self.eval(e1, xi1, p1) - self.eval(e2, xi2, p2)).abs();
            sup = sup.max(dr * (-d.ln()));
        }
        sup
    }
}

/// Modular rho_r(f) = int_Omega |f(x)|^{r(x)} dx for a sampled field
/// f(elem, refpt, phys) -> value.
pub fn modular(
    mesh: &Mesh,
    quad: &QuadratureRule,
    f: &dyn Fn(usize, Point, Point) -> f64,
    r: &ExponentField,
) -> f64 {
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        for (w, xi) in quad.points() {
            let phys = map.apply(xi);
            let val = f(e, xi, phys).abs();
            let rx = r.eval(e, xi, phys);
            total += w * map.det * val.powf(rx);
        }
    }
    total
}

/// Luxemburg norm ||f||_r = inf { lam > 0 : rho_r(f/lam) <= 1 }, by bisection
/// on the (strictly decreasing) function lam -> rho_r(f/lam).
pub fn luxemburg_norm(
    mesh: &Mesh,
    quad: &QuadratureRule,
    f: &dyn Fn(usize, Point, Point) -> f64,
    r: &ExponentField,
) -> f64 {
    let m1 = modular(mesh, quad, f, r);
    if m1 == 0.0 {
        return 0.0;
    }
    if (m1 - 1.0).abs() <= 1e-12 {
        return 1.0;
    }
    let modular_at = |lam: f64| {
        modular(mesh, quad, &|e, xi, p| f(e, xi, p) / lam, r)
    };
    // bracket [lo, hi] with modular(lo) >= 1 >= modular(hi)
    let (mut lo, mut hi);
    if m1 > 1.0 {
        lo = 1.0;
        hi = 2.0;
        while modular_at(hi) > 1.0 {
            lo = hi;
            hi *= 2.0;
            assert!(hi < 1e200, "Luxemburg bracket diverged");
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while modular_at(lo) < 1.0 {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-200 {
                // numerically zero function
                return 0.0;
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = modular_at(mid);
        if (m - 1.0).abs() <= 1e-10 {
            return mid;
        }
        if m > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Luxemburg norm of a finite-element function's pointwise euclidean
/// magnitude.
pub fn fe_luxemburg_norm(
    quad: &QuadratureRule,
    f: &FEFunction,
    r: &ExponentField,
) -> f64 {
    let mesh = &f.space.mesh;
    luxemburg_norm(mesh, quad, &|e, xi, _| {
        let (vals, _) = f.evaluate(e, xi);
        vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }, r)
}

/// Sobolev norm ||f||_{1,r} = ||f||_r + ||grad f||_r (Luxemburg norms of the
/// pointwise magnitudes).
pub fn sobolev_norm_1r(
    mesh: &Mesh,
    quad: &QuadratureRule,
    f: &FEFunction,
    r: &ExponentField,
) -> f64 {
    let val_norm = luxemburg_norm(mesh, quad, &|e, xi, _| {
        let (vals, _) = f.evaluate(e, xi);
        vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }, r);
    let grad_norm = luxemburg_norm(mesh, quad, &|e, xi, _| {
        let (_, grads) = f.evaluate(e, xi);
        grads.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>().sqrt()
    }, r);
    val_norm + grad_norm
}

/// Per-element witness for the averaging estimate
/// (avg_Q |f|)^{r(x)} <= c1 avg_Q |f|^{r(y)} dy + c1 |Q|^m:
/// returns the smallest admissible c1 over all elements Q and sample points
/// x in Q. Finite for log-Hoelder exponents and m within the admissible
/// range; blows up when the estimate fails.
pub fn key_estimate_witness(
    mesh: &Mesh,
    quad: &QuadratureRule,
    f: &dyn Fn(usize, Point, Point) -> f64,
    r: &ExponentField,
    m: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        let map = mesh.affine_map(e);
        let area = 0.5 * map.det;
        let mut avg_f = 0.0;
        let mut avg_pow = 0.0;
        let mut r_max: f64 = f64::NEG_INFINITY;
        for (w, xi) in quad.points() {
            let phys = map.apply(xi);
            let val = f(e, xi, phys).abs();
            let rx = r.eval(e, xi, phys);
            avg_f += w * map.det * val;
            avg_pow += w * map.det * val.powf(rx);
            r_max = r_max.max(rx);
        }
        avg_f /= area;
        avg_pow /= area;
        let lhs = avg_f.powf(r_max);
        let rhs = avg_pow + area.powf(m);
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    worst
}
