//! Constitutive laws: the shear-thinning/thickening extra stress
//! S(c, Du) = nu0 (kappa1 + kappa2 |Du|^2)^{(r(c)-2)/2} Du with a
//! concentration-dependent exponent, its exact tangent, and the
//! concentration flux conductivity K(|Du|) = k0 + k1/(1 + |Du|).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::varexp::ScalarExponentLaw;

pub type Tensor2 = [[f64; 2]; 2];

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("stress parameters violate structural assumptions: {0}")]
    BadParams(String),
}

pub fn tensor_dot(a: &Tensor2, b: &Tensor2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

pub fn tensor_norm(a: &Tensor2) -> f64 {
    tensor_dot(a, a).sqrt()
}

/// Parameters of the power-law stress. `clamp` is the admissible
/// concentration interval; evaluations clamp c into it (with a small margin)
/// before applying the exponent law, so stray over/undershoots of a discrete
/// concentration cannot push the exponent out of range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StressParams {
    pub nu0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    #[serde(skip, default = "default_law")]
    pub law: ScalarExponentLaw,
    pub clamp: (f64, f64),
}

fn default_law() -> ScalarExponentLaw {
    ScalarExponentLaw::Rational { a: 2.0, b: 0.0 }
}

impl StressParams {
    pub fn newtonian(nu0: f64) -> Self {
        StressParams {
            nu0,
            kappa1: 1.0,
            kappa2: 1.0,
            law: default_law(),
            clamp: (0.0, 1.0),
        }
    }

    pub fn power_law(nu0: f64, kappa1: f64, kappa2: f64, law: ScalarExponentLaw, clamp: (f64, f64)) -> Result<Self, PhysicsError> {
        if nu0 <= 0.0 || kappa1 <= 0.0 || kappa2 < 0.0 {
            return Err(PhysicsError::BadParams(format!(
                "need nu0 > 0, kappa1 > 0, kappa2 >= 0; got {nu0}, {kappa1}, {kappa2}"
            )));
        }
        law.validate()
            .map_err(|e| PhysicsError::BadParams(e.to_string()))?;
        if clamp.1 <= clamp.0 {
            return Err(PhysicsError::BadParams(format!(
                "empty concentration interval {clamp:?}"
            )));
        }
        Ok(StressParams { nu0, kappa1, kappa2, law, clamp })
    }

    pub fn exponent(&self, c: f64) -> f64 {
        let delta = 0.01 * (self.clamp.1 - self.clamp.0);
        self.law
            .eval(c.clamp(self.clamp.0 - delta, self.clamp.1 + delta))
    }

    /// Generalized viscosity nu(c, Du) so that S = nu * Du.
    pub fn viscosity(&self, c: f64, du: &Tensor2) -> f64 {
        let r = self.exponent(c);
        let d2 = tensor_dot(du, du);
        self.nu0 * (self.kappa1 + self.kappa2 * d2).powf(0.5 * (r - 2.0))
    }

    pub fn stress(&self, c: f64, du: Tensor2) -> Tensor2 {
        let nu = self.viscosity(c, &du);
        [
            [nu * du[0][0], nu * du[0][1]],
            [nu * du[1][0], nu * du[1][1]],
        ]
    }

    /// Exact derivative dS/d(Du) at a state, stored in applied form:
    /// dS[E] = nu E + 2 nu' (Du : E) Du, nu' = d nu / d(|Du|^2).
    pub fn stress_tangent(&self, c: f64, du: &Tensor2) -> StressTangent {
        let r = self.exponent(c);
        let d2 = tensor_dot(du, du);
        let base = self.kappa1 + self.kappa2 * d2;
        let nu = self.nu0 * base.powf(0.5 * (r - 2.0));
        let dnu = self.nu0 * 0.5 * (r - 2.0) * self.kappa2 * base.powf(0.5 * (r - 4.0));
        StressTangent { nu, dnu, du: *du }
    }
}

/// Applied form of the stress Jacobian at a frozen state.
#[derive(Debug, Clone)]
pub struct StressTangent {
    pub nu: f64,
    pub dnu: f64,
    pub du: Tensor2,
}

impl StressTangent {
    pub fn apply(&self, e: &Tensor2) -> Tensor2 {
        let s = 2.0 * self.dnu * tensor_dot(&self.du, e);
        [
            [self.nu * e[0][0] + s * self.du[0][0], self.nu * e[0][1] + s * self.du[0][1]],
            [self.nu * e[1][0] + s * self.du[1][0], self.nu * e[1][1] + s * self.du[1][1]],
        ]
    }

    /// Orthonormal Voigt representation (d11, d22, sqrt2 d12): the 3x3 matrix
    /// nu I + 2 nu' d d^T. Symmetric positive definite for admissible states.
    pub fn voigt(&self) -> [[f64; 3]; 3] {
        let d = [self.du[0][0], self.du[1][1], std::f64::consts::SQRT_2 * self.du[0][1]];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = 2.0 * self.dnu * d[i] * d[j];
            }
            m[i][i] += self.nu;
        }
        m
    }
}

/// dS[e] : f, the bilinear form of the tangent (used directly in assembly).
pub fn apply_tangent_dot(t: &StressTangent, e: &Tensor2, f: &Tensor2) -> f64 {
    t.nu * tensor_dot(e, f) + 2.0 * t.dnu * tensor_dot(&t.du, e) * tensor_dot(&t.du, f)
}

/// Concentration flux conductivity K(|Du|) = k0 + k1/(1 + |Du|), so the flux
/// is q = K grad c. Bounded between k0 and k0 + k1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxParams {
    pub k0: f64,
    pub k1: f64,
}

impl FluxParams {
    pub fn new(k0: f64, k1: f64) -> Result<Self, PhysicsError> {
        if k0 <= 0.0 || k1 < 0.0 {
            return Err(PhysicsError::BadParams(format!(
                "need k0 > 0, k1 >= 0; got {k0}, {k1}"
            )));
        }
        Ok(FluxParams { k0, k1 })
    }

    pub fn conductivity(&self, du_norm: f64) -> f64 {
        self.k0 + self.k1 / (1.0 + du_norm)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.k0, self.k0 + self.k1)
    }
}

/// Outcome of the numerical structural-assumption sampler.
#[derive(Debug, Clone, Default)]
pub struct StructuralReport {
    pub samples: usize,
    pub monotonicity_violations: usize,
    pub coercivity_violations: usize,
    pub growth_violations: usize,
    pub flux_bound_violations: usize,
    pub min_monotonicity_gap: f64,
}

impl StructuralReport {
    pub fn violations(&self) -> usize {
        self.monotonicity_violations
            + self.coercivity_violations
            + self.growth_violations
            + self.flux_bound_violations
    }
}

fn random_sym(rng: &mut impl rand::Rng, scale: f64) -> Tensor2 {
    let a = rng.gen_range(-scale..scale);
    let b = rng.gen_range(-scale..scale);
    let c = rng.gen_range(-scale..scale);
    [[a, c], [c, b]]
}

/// Randomized check of the structural assumptions on S and K:
/// monotonicity (S(A)-S(B)):(A-B) >= 0, coercivity S(A):A >= c(|A|^r - 1),
/// growth |S(A)| <= c(1+|A|)^{r-1}, and the conductivity bounds.
pub fn verify_structural(
    stress: &StressParams,
    flux: &FluxParams,
    samples: usize,
    seed: u64,
) -> StructuralReport {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = StructuralReport {
        samples,
        min_monotonicity_gap: f64::INFINITY,
        ..Default::default()
    };
    for _ in 0..samples {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let a = random_sym(&mut rng, scale);
        let b = random_sym(&mut rng, scale);
        let c = rng.gen_range(stress.clamp.0..stress.clamp.1);
        let r = stress.exponent(c);
        let sa = stress.stress(c, a);
        let sb = stress.stress(c, b);
        let diff = [
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ];
        let sdiff = [
            [sa[0][0] - sb[0][0], sa[0][1] - sb[0][1]],
            [sa[1][0] - sb[1][0], sa[1][1] - sb[1][1]],
        ];
        let gap = tensor_dot(&sdiff, &diff);
        let dscale = tensor_norm(&diff) * (tensor_norm(&sa) + tensor_norm(&sb));
        if gap < -1e-12 * (1.0 + dscale) {
            report.monotonicity_violations += 1;
        }
        report.min_monotonicity_gap = report.min_monotonicity_gap.min(gap);

        // coercivity S(A):A >= c (|A|^r - 1); for r <= 2 the closed form
        // gives c = nu0 (kappa1 + kappa2)^{(r-2)/2}, for r > 2 (kappa2 > 0)
        // c = nu0 min(kappa1, kappa2)^{(r-2)/2}
        let na = tensor_norm(&a);
        let energy = tensor_dot(&sa, &a);
        let cmin = if r <= 2.0 {
            stress.nu0 * (stress.kappa1 + stress.kappa2).powf(0.5 * (r - 2.0))
        } else if stress.kappa2 > 0.0 {
            stress.nu0 * stress.kappa1.min(stress.kappa2).powf(0.5 * (r - 2.0))
        } else {
            0.0
        };
        if energy + 1e-12 < cmin * (na.powf(r) - 1.0) {
            report.coercivity_violations += 1;
        }

        // growth |S(A)| <= C (1 + |A|)^{r-1}; for r <= 2 (kappa2 > 0):
        // C = nu0 max(kappa1, kappa2)^{(r-2)/2}; for r > 2:
        // C = nu0 (kappa1 + kappa2)^{(r-2)/2}
        let cmax = if r <= 2.0 && stress.kappa2 > 0.0 {
            // (r-2)/2 <= 0, so the smaller kappa gives the larger bound
            stress.nu0 * stress.kappa1.min(stress.kappa2).powf(0.5 * (r - 2.0))
        } else {
            stress.nu0 * (stress.kappa1 + stress.kappa2).powf(0.5 * (r - 2.0).max(0.0))
        };
        if tensor_norm(&sa) > cmax * (1.0 + na).powf(r - 1.0) + 1e-12 {
            report.growth_violations += 1;
        }

        let k = flux.conductivity(na);
        let (klo, khi) = flux.bounds();
        if !(klo - 1e-14..=khi + 1e-14).contains(&k) {
            report.flux_bound_violations += 1;
        }
    }
    report
}
