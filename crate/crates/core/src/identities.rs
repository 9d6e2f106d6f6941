//! The exact-identity suite behind `isoq verify`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::expansion::{
    nonumbilic_step1_stated, nonumbilic_step1_terms, umbilic_closed_sum, umbilic_stated,
};
use crate::specfun::{
    ball_volume, gamma_ratio_half, rat, sphere_moment4, theta_ball, Base, HalfInt, RadialIntegral,
    REDUCTION_TABLE,
};

/// Every identity family, in the order the suite runs them.
pub const IDENTITY_NAMES: [&str; 11] = [
    "reduction r^(n+2)/(1+r^2)^(n+1)",
    "reduction r^(n-2)/(1+r^2)^n",
    "reduction r^(n-2)/(1+r^2)^(n-1)",
    "reduction r^n/(1+r^2)^(n+1)",
    "sphere moment x1^4",
    "moment4 = 3 moment22",
    "step-1 combination",
    "(R_ninj)^2 multiplier",
    "|W|^2 multiplier",
    "R_nn cancellation",
    "ball volume normalisation",
];

/// Index of the floating-point equality-case check, run after the exact ones.
pub const EQUALITY_CASE: &str = "ball quotient equality case";
pub const EQUALITY_TOL: f64 = 1e-12;

/// Multiplies the computed side of one identity at one dimension by
/// `factor` before comparing; used as a negative control.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub identity: usize,
    pub n: u32,
    pub factor: BigRational,
}

impl Perturbation {
    /// Factor `1 + eps`, with `eps` converted exactly from its binary value.
    pub fn relative(identity: usize, n: u32, eps: f64) -> Option<Self> {
        let eps = BigRational::from_float(eps)?;
        Some(Perturbation {
            identity,
            n,
            factor: BigRational::one() + eps,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub n: u32,
    pub passed: bool,
    pub detail: Option<String>,
}

fn pi_form(q: BigRational, base: Base) -> (BigRational, HalfInt) {
    let (b, k) = base.to_pi_power();
    (q * b, k)
}

fn pi_mul(a: (BigRational, HalfInt), b: (BigRational, HalfInt)) -> (BigRational, HalfInt) {
    (a.0 * b.0, HalfInt(a.1 .0 + b.1 .0))
}

/// Computed and stated sides of identity `idx` at dimension `n`, both as
/// rationals against a common base. `None` if undefined at this `n`.
fn sides(idx: usize, n: u32) -> Result<Option<(BigRational, BigRational)>, String> {
    let e = |err: &dyn std::fmt::Display| err.to_string();
    let ni = i64::from(n);
    Ok(Some(match idx {
        0..=3 => {
            let id = &REDUCTION_TABLE[idx];
            let integral = id.integral(n).map_err(|x| e(&x))?;
            (
                integral.ratio_to_base(n).map_err(|x| e(&x))?,
                id.stated_ratio(n),
            )
        }
        4 => {
            // ∫_{S^m} x₁⁴ / |S^m| = Γ(5/2)Γ((m+1)/2) / (Γ(1/2)Γ((m+5)/2)), m = n−2.
            let m = n - 2;
            let computed = gamma_ratio_half(5, 1) * gamma_ratio_half(m + 1, m + 5);
            (computed, rat(3, (ni - 1) * (ni + 1)))
        }
        5 => {
            if n < 3 {
                return Ok(None);
            }
            let m22 =
                gamma_ratio_half(3, 1) * gamma_ratio_half(3, 1) * gamma_ratio_half(n - 1, n + 3);
            (sphere_moment4(n).coeff().clone(), rat(3, 1) * m22)
        }
        6 => {
            let t = nonumbilic_step1_terms(n).map_err(|x| e(&x))?;
            (t.combination.coeff().clone(), nonumbilic_step1_stated(n))
        }
        7..=9 => {
            let c = umbilic_closed_sum(n).map_err(|x| e(&x))?;
            let (r, w) = umbilic_stated(n).map_err(|x| e(&x))?;
            match idx {
                7 => (c.rninj2.coeff().clone(), r),
                8 => (c.wbar2.coeff().clone(), w),
                _ => (c.rnn.coeff().clone(), BigRational::zero()),
            }
        }
        10 => {
            // |S^{n−2}|·∫r^{n−2}/(1+r²)^n / n against 2^{−n}ω_n = 2^{−n}|S^{n−1}|/n, in π-power form.
            let radial = RadialIntegral::new(n - 2, n)
                .map_err(|x| e(&x))?
                .exact()
                .to_pi_power();
            let Base::PiPower(k) = radial.base() else {
                return Err("radial integral not in π-power form".into());
            };
            let lhs = pi_mul(
                Base::SphereArea(n - 2).to_pi_power(),
                (radial.coeff().clone(), k),
            );
            let scale = rat(1, ni) / BigRational::from_integer(BigInt::from(2).pow(n));
            let rhs = pi_form(scale, Base::SphereArea(n - 1));
            if lhs.1 != rhs.1 {
                return Err(format!("π powers differ: {} vs {}", lhs.1 .0, rhs.1 .0));
            }
            (lhs.0 / rat(ni, 1), rhs.0)
        }
        _ => return Err(format!("no identity with index {idx}")),
    }))
}

/// `(2^{−n}ω_n)/(2^{−(n−1)}nω_n)^{n/(n−1)}` against the ball constant.
pub fn equality_case_error(n: u32) -> f64 {
    let nf = f64::from(n);
    let w = ball_volume(n);
    let lhs = 2f64.powf(-nf) * w / (2f64.powf(1.0 - nf) * nf * w).powf(nf / (nf - 1.0));
    ((lhs - theta_ball(n)) / theta_ball(n)).abs()
}

/// Runs every identity for `n ∈ [n_min, n_max]` (exact ones with zero
/// tolerance) and returns one record per check.
pub fn run_suite(n_min: u32, n_max: u32, perturb: Option<&Perturbation>) -> Vec<IdentityCheck> {
    let mut out = Vec::new();
    for n in n_min.max(6)..=n_max {
        for (idx, name) in IDENTITY_NAMES.iter().enumerate() {
            let check = match sides(idx, n) {
                Ok(None) => continue,
                Ok(Some((mut computed, stated))) => {
                    if let Some(p) = perturb.filter(|p| p.identity == idx && p.n == n) {
                        computed = if computed.is_zero() {
                            p.factor.clone() - BigRational::one()
                        } else {
                            computed * &p.factor
                        };
                    }
                    let passed = computed == stated;
                    IdentityCheck {
                        name: name.to_string(),
                        n,
                        passed,
                        detail: (!passed).then(|| format!("computed {computed}, stated {stated}")),
                    }
                }
                Err(msg) => IdentityCheck {
                    name: name.to_string(),
                    n,
                    passed: false,
                    detail: Some(msg),
                },
            };
            out.push(check);
        }
    }
    for n in n_min.max(3)..=n_max {
        let err = equality_case_error(n);
        let passed = err <= EQUALITY_TOL;
        out.push(IdentityCheck {
            name: EQUALITY_CASE.to_string(),
            n,
            passed,
            detail: (!passed).then(|| format!("relative error {err:e}")),
        });
    }
    out
}

/// First failing check, if any.
pub fn first_failure(checks: &[IdentityCheck]) -> Option<&IdentityCheck> {
    checks.iter().find(|c| !c.passed)
}
