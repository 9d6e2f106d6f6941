//! Exact closed forms for the integrals, sphere moments and ball constants
//! that appear in the bubble expansions.
//!
//! Every radial integral `∫₀^∞ r^a/(1+r²)^b dr` is half a Beta function with
//! integer or half-integer arguments, so its value is a rational multiple of
//! `π^0` or `π^1`. Ratios of such integrals with `a` of equal parity are pure
//! rationals and are computed with the recurrence `Γ(x+1) = xΓ(x)` only.

use std::f64::consts::PI;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecfunError {
    #[error("radial integral r^{a}/(1+r^2)^{b} diverges (need 2b > a+1)")]
    DivergentRadial { a: u32, b: u32 },
    #[error("line integral y^{p}/(1+y)^{q} diverges (need q >= p+2)")]
    DivergentLine { p: u32, q: u32 },
    #[error("exponent {a} and base dimension {n} differ in parity; ratio is not rational")]
    Parity { a: u32, n: u32 },
    #[error("cannot add quantities on different bases ({left} vs {right})")]
    BaseMismatch { left: Base, right: Base },
    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, SpecfunError>;

/// Shorthand for building a rational from small integers.
pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// A half-integer stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(pub i32);

impl HalfInt {
    pub fn from_int(v: i32) -> Self {
        HalfInt(2 * v)
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / 2.0
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Symbolic base an exact coefficient multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Base {
    One,
    /// `|S^m|`, the area of the unit m-sphere.
    SphereArea(u32),
    /// `J_n = ∫₀^∞ r^n/(1+r²)^n dr`.
    BaseJ(u32),
    /// `|S^m| · J_n`.
    SphereTimesJ {
        m: u32,
        n: u32,
    },
    /// `π^k` with half-integer `k`.
    PiPower(HalfInt),
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Base::One => write!(f, "1"),
            Base::SphereArea(m) => write!(f, "|S^{m}|"),
            Base::BaseJ(n) => write!(f, "J_{n}"),
            Base::SphereTimesJ { m, n } => write!(f, "|S^{m}|*J_{n}"),
            Base::PiPower(k) => write!(f, "pi^{k}"),
        }
    }
}

impl Base {
    /// Exact value of the base as `q · π^k`.
    pub fn to_pi_power(self) -> (BigRational, HalfInt) {
        match self {
            Base::One => (BigRational::one(), HalfInt(0)),
            Base::PiPower(k) => (BigRational::one(), k),
            Base::SphereArea(m) => sphere_area_pi_form(m),
            Base::BaseJ(n) => radial_pi_form(n, n),
            Base::SphereTimesJ { m, n } => {
                let (qa, ka) = sphere_area_pi_form(m);
                let (qb, kb) = radial_pi_form(n, n);
                (qa * qb, ka + kb)
            }
        }
    }

    pub fn to_f64(self) -> f64 {
        let (q, k) = self.to_pi_power();
        rational_to_f64(&q) * pi_power_f64(k)
    }
}

/// Rational coefficient attached to a symbolic base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactQuantity {
    coeff: BigRational,
    base: Base,
}

impl ExactQuantity {
    pub fn new(coeff: BigRational, base: Base) -> Self {
        ExactQuantity { coeff, base }
    }

    pub fn zero(base: Base) -> Self {
        ExactQuantity::new(BigRational::zero(), base)
    }

    pub fn coeff(&self) -> &BigRational {
        &self.coeff
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    /// Sign of the quantity; every base is strictly positive.
    pub fn signum(&self) -> i32 {
        if self.coeff.is_zero() {
            0
        } else if self.coeff.is_positive() {
            1
        } else {
            -1
        }
    }

    pub fn checked_add(&self, other: &ExactQuantity) -> Result<ExactQuantity> {
        if self.base != other.base {
            return Err(SpecfunError::BaseMismatch {
                left: self.base,
                right: other.base,
            });
        }
        Ok(ExactQuantity::new(&self.coeff + &other.coeff, self.base))
    }

    pub fn scale(&self, factor: &BigRational) -> ExactQuantity {
        ExactQuantity::new(&self.coeff * factor, self.base)
    }

    /// Exact `q · π^k` form, the common currency for comparing bases.
    pub fn to_pi_power(&self) -> ExactQuantity {
        let (q, k) = self.base.to_pi_power();
        ExactQuantity::new(&self.coeff * q, Base::PiPower(k))
    }

    /// Exact equality after converting both sides to a power of π.
    pub fn exact_eq(&self, other: &ExactQuantity) -> bool {
        let a = self.to_pi_power();
        let b = other.to_pi_power();
        if a.coeff.is_zero() && b.coeff.is_zero() {
            return true;
        }
        a == b
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.coeff) * self.base.to_f64()
    }
}

impl fmt::Display for ExactQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) * {}", self.coeff, self.base)
    }
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn pi_power_f64(k: HalfInt) -> f64 {
    let whole = k.0.div_euclid(2);
    let half = k.0.rem_euclid(2);
    let mut v = PI.powi(whole);
    if half == 1 {
        v *= PI.sqrt();
    }
    v
}

fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// `Γ(t/2)` for a positive integer `t`, as `q · π^k` with `k ∈ {0, 1/2}`.
pub fn gamma_half(twice: u32) -> (BigRational, HalfInt) {
    assert!(twice > 0, "Gamma has a pole at 0");
    if twice % 2 == 0 {
        (
            BigRational::from_integer(factorial(twice / 2 - 1)),
            HalfInt(0),
        )
    } else {
        // Γ(k + 1/2) = (2k)! / (4^k k!) · √π
        let k = (twice - 1) / 2;
        let num = factorial(2 * k);
        let den = BigInt::from(4u32).pow(k) * factorial(k);
        (BigRational::new(num, den), HalfInt(1))
    }
}

/// Exact `Γ(x/2) / Γ(y/2)` for positive integers with `x - y` even, by the
/// recurrence `Γ(z+1) = zΓ(z)`.
pub fn gamma_ratio_half(x: u32, y: u32) -> BigRational {
    assert!(x > 0 && y > 0 && (x as i64 - y as i64) % 2 == 0);
    let mut acc = BigRational::one();
    let mut z = y.min(x);
    let hi = y.max(x);
    while z < hi {
        acc *= rat(z as i64, 2);
        z += 2;
    }
    if x >= y {
        acc
    } else {
        acc.recip()
    }
}

/// Exponent pair naming `∫₀^∞ r^a/(1+r²)^b dr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RadialIntegral {
    pub a: u32,
    pub b: u32,
}

impl RadialIntegral {
    pub fn new(a: u32, b: u32) -> Result<Self> {
        if b == 0 || 2 * b <= a + 1 {
            return Err(SpecfunError::DivergentRadial { a, b });
        }
        Ok(RadialIntegral { a, b })
    }

    pub fn value(&self) -> f64 {
        beta_half_unchecked(self.a, self.b)
    }

    pub fn exact(&self) -> ExactQuantity {
        let (q, k) = radial_pi_form(self.a, self.b);
        ExactQuantity::new(q, Base::PiPower(k))
    }

    pub fn ratio_to_base(&self, n: u32) -> Result<BigRational> {
        radial_ratio_to_base(self.a, self.b, n)
    }
}

/// Exponent pair naming `∫₀^∞ y^p/(1+y)^q dy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LineIntegral {
    pub p: u32,
    pub q: u32,
}

impl LineIntegral {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if q < p + 2 {
            return Err(SpecfunError::DivergentLine { p, q });
        }
        Ok(LineIntegral { p, q })
    }

    pub fn value(&self) -> BigRational {
        BigRational::new(
            factorial(self.p) * factorial(self.q - self.p - 2),
            factorial(self.q - 1),
        )
    }
}

/// `½·Γ(α)Γ(b−α)/Γ(b)` with `α = (a+1)/2`, as `q · π^k`.
fn radial_pi_form(a: u32, b: u32) -> (BigRational, HalfInt) {
    let ta = a + 1; // 2α
    let tb = 2 * b - ta; // 2(b − α)
    let (g1, k1) = gamma_half(ta);
    let (g2, k2) = gamma_half(tb);
    let (g3, k3) = gamma_half(2 * b);
    (g1 * g2 / g3 * rat(1, 2), k1 + k2 - k3)
}

fn sphere_area_pi_form(m: u32) -> (BigRational, HalfInt) {
    // |S^m| = 2 π^{(m+1)/2} / Γ((m+1)/2)
    let (g, k) = gamma_half(m + 1);
    (rat_int(2) / g, HalfInt((m + 1) as i32) - k)
}

/// `Γ(t/2)` in floating point by upward recurrence from `Γ(1)` or `Γ(1/2)`.
fn gamma_half_f64(twice: u32) -> f64 {
    let (mut z, mut acc) = if twice % 2 == 0 {
        (2u32, 1.0)
    } else {
        (1u32, PI.sqrt())
    };
    while z < twice {
        acc *= f64::from(z) / 2.0;
        z += 2;
    }
    acc
}

fn beta_half_unchecked(a: u32, b: u32) -> f64 {
    let ta = a + 1;
    let tb = 2 * b - ta;
    if b <= 170 {
        0.5 * gamma_half_f64(ta) * (gamma_half_f64(tb) / gamma_half_f64(2 * b))
    } else {
        use statrs::function::gamma::ln_gamma;
        let (alpha, b) = (f64::from(ta) / 2.0, f64::from(b));
        0.5 * (ln_gamma(alpha) + ln_gamma(b - alpha) - ln_gamma(b)).exp()
    }
}

/// Floating value of `∫₀^∞ r^a/(1+r²)^b dr` from the Gamma function.
pub fn beta_half(a: u32, b: u32) -> Result<f64> {
    RadialIntegral::new(a, b).map(|ri| ri.value())
}

/// Exact `∫₀^∞ y^p/(1+y)^q dy = p!(q−p−2)!/(q−1)!`.
pub fn beta_line_rational(p: u32, q: u32) -> Result<BigRational> {
    LineIntegral::new(p, q).map(|li| li.value())
}

/// Exact ratio `∫ r^a/(1+r²)^b / J_n` when `a ≡ n (mod 2)`.
pub fn radial_ratio_to_base(a: u32, b: u32, n: u32) -> Result<BigRational> {
    RadialIntegral::new(a, b)?;
    if n < 2 {
        return Err(SpecfunError::Domain(format!("base J_{n} diverges")));
    }
    if (a + n) % 2 != 0 {
        return Err(SpecfunError::Parity { a, n });
    }
    // Γ(α)/Γ(αₙ) · Γ(b−α)/Γ(n−αₙ) · Γ(n)/Γ(b), all arguments doubled.
    let ta = a + 1;
    let tn = n + 1;
    let tb = 2 * b - ta;
    let tbn = 2 * n - tn;
    Ok(gamma_ratio_half(ta, tn) * gamma_ratio_half(tb, tbn) * gamma_ratio_half(2 * n, 2 * b))
}

pub fn sphere_area_exact(m: u32) -> ExactQuantity {
    ExactQuantity::new(BigRational::one(), Base::SphereArea(m))
}

/// `|S^m| = 2π^{(m+1)/2}/Γ((m+1)/2)`.
pub fn sphere_area(m: u32) -> f64 {
    Base::SphereArea(m).to_f64()
}

/// `ω_n = π^{n/2}/Γ(n/2+1) = |S^{n−1}|/n`.
pub fn ball_volume(n: u32) -> f64 {
    assert!(n >= 1, "ball dimension must be positive");
    sphere_area(n - 1) / f64::from(n)
}

/// `∫_{S^{n−2}} x₁⁴ = 3|S^{n−2}|/((n−1)(n+1))`.
pub fn sphere_moment4(n: u32) -> ExactQuantity {
    assert!(n >= 2, "sphere S^(n-2) needs n >= 2");
    let n = i64::from(n);
    ExactQuantity::new(rat(3, (n - 1) * (n + 1)), Base::SphereArea((n - 2) as u32))
}

/// `∫_{S^{n−2}} x₁²x₂² = |S^{n−2}|/((n−1)(n+1))`; needs at least two coordinates.
pub fn sphere_moment22(n: u32) -> ExactQuantity {
    assert!(n >= 3, "x1^2 x2^2 needs two coordinates (n >= 3)");
    let n = i64::from(n);
    ExactQuantity::new(rat(1, (n - 1) * (n + 1)), Base::SphereArea((n - 2) as u32))
}

/// Best isoperimetric constant `n^{−n/(n−1)} ω_n^{−1/(n−1)}` of the unit ball.
pub fn theta_ball(n: u32) -> f64 {
    assert!(n >= 2);
    let nf = f64::from(n);
    nf.powf(-nf / (nf - 1.0)) * ball_volume(n).powf(-1.0 / (nf - 1.0))
}

/// One entry of the reduction table relating `∫ r^{n+da}/(1+r²)^{n+db}` to `J_n`.
#[derive(Debug, Clone, Copy)]
pub struct ReductionIdentity {
    pub name: &'static str,
    pub a_shift: i32,
    pub b_shift: i32,
    /// `(num_const, num_n, den_const, den_n)`: ratio `(c₁ + c₂n)/(d₁ + d₂n)`.
    pub ratio: (i64, i64, i64, i64),
}

impl ReductionIdentity {
    pub fn integral(&self, n: u32) -> Result<RadialIntegral> {
        let a = i64::from(n) + i64::from(self.a_shift);
        let b = i64::from(n) + i64::from(self.b_shift);
        if a < 0 || b < 1 {
            return Err(SpecfunError::Domain(format!(
                "{} undefined at n={n}",
                self.name
            )));
        }
        RadialIntegral::new(a as u32, b as u32)
    }

    pub fn stated_ratio(&self, n: u32) -> BigRational {
        let n = i64::from(n);
        let (c1, c2, d1, d2) = self.ratio;
        rat(c1 + c2 * n, d1 + d2 * n)
    }
}

/// Closed-form relations to `J_n` used by both expansion cases. Entry 1 is
/// the conversion between `∫ r^{n−2}/(1+r²)^n` and `J_n`.
pub const REDUCTION_TABLE: [ReductionIdentity; 4] = [
    ReductionIdentity {
        name: "r^(n+2)/(1+r^2)^(n+1)",
        a_shift: 2,
        b_shift: 1,
        ratio: (1, 1, 0, 2),
    },
    ReductionIdentity {
        name: "r^(n-2)/(1+r^2)^n",
        a_shift: -2,
        b_shift: 0,
        ratio: (1, 0, 1, 0),
    },
    ReductionIdentity {
        name: "r^(n-2)/(1+r^2)^(n-1)",
        a_shift: -2,
        b_shift: -1,
        ratio: (2, 0, 1, 0),
    },
    ReductionIdentity {
        name: "r^n/(1+r^2)^(n+1)",
        a_shift: 0,
        b_shift: 1,
        ratio: (-1, 1, 0, 2),
    },
];

/// Ratio `∫ r^{n−2}/(1+r²)^n : J_n`, read from the reduction table.
pub fn j_prime_to_base(n: u32) -> BigRational {
    REDUCTION_TABLE[1].stated_ratio(n)
}
