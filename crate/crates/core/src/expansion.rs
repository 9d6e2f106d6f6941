//! Assembly of the λ² (nonumbilic) and λ⁴ (umbilic) expansion coefficients
//! of the isoperimetric quotient along the bubble family.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxpde::{self, AuxError, AuxProblem, Field2D, Grid2D, SolveOptions, SolveReport};
use crate::quadrature::{
    integrate_field_weighted, Kernel, QuadError, QuadResult, TailSpec, DEFAULT_TOL_2D,
};
use crate::specfun::{
    ball_volume, beta_line_rational, radial_ratio_to_base, rat, sphere_moment4, theta_ball, Base,
    ExactQuantity, SpecfunError,
};

pub const NONUMBILIC_THRESHOLD: u32 = 12;
pub const UMBILIC_THRESHOLD: u32 = 10;
pub const MIN_DIMENSION: u32 = 6;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("dimension n = {0} is outside the supported range (n >= {MIN_DIMENSION})")]
    Dimension(u32),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error(transparent)]
    Aux(#[from] AuxError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("auxiliary solve failed: {0}")]
    Solve(String),
}

pub type Result<T> = std::result::Result<T, ExpansionError>;

fn check_dimension(n: u32) -> Result<()> {
    if n < MIN_DIMENSION {
        Err(ExpansionError::Dimension(n))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Nonumbilic,
    Umbilic,
}

impl Case {
    pub fn threshold(self) -> u32 {
        match self {
            Case::Nonumbilic => NONUMBILIC_THRESHOLD,
            Case::Umbilic => UMBILIC_THRESHOLD,
        }
    }

    pub fn is_exploratory(self, n: u32) -> bool {
        n < self.threshold()
    }

    /// Power of λ at which the coefficient enters the quotient.
    pub fn order(self) -> i32 {
        match self {
            Case::Nonumbilic => 2,
            Case::Umbilic => 4,
        }
    }

    pub fn source_power(self) -> u32 {
        match self {
            Case::Nonumbilic => 1,
            Case::Umbilic => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Nonumbilic => "nonumbilic",
            Case::Umbilic => "umbilic",
        }
    }
}

impl std::str::FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nonumbilic" => Ok(Case::Nonumbilic),
            "umbilic" => Ok(Case::Umbilic),
            other => Err(format!(
                "unknown case '{other}' (expected nonumbilic or umbilic)"
            )),
        }
    }
}

/// Curvature invariants at the concentration point. `h2 = |h|²`,
/// `rninj2 = (R_ninj)²`, `wbar2 = |W̄|²`, `rnn2 = R_,nn`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureInputs {
    pub h2: f64,
    pub rninj2: f64,
    pub wbar2: f64,
    pub rnn2: f64,
}

impl Default for CurvatureInputs {
    fn default() -> Self {
        CurvatureInputs {
            h2: 1.0,
            rninj2: 1.0,
            wbar2: 1.0,
            rnn2: 0.0,
        }
    }
}

fn sphere_j(n: u32) -> Base {
    Base::SphereTimesJ { m: n - 2, n }
}

/// `∫_{ℝⁿ₊} y_n^p |y'|^{2k} ((1+y_n)² + |y'|²)^{−m} dy` as a rational
/// multiple of `|S^{n−2}|·J_n`. Scaling `y' = (1+y_n)z'` splits it into
/// `∫ y^p/(1+y)^{2m−2k−n+1} dy` times `|S^{n−2}| ∫ r^{n−2+2k}/(1+r²)^m dr`.
pub fn half_space_moment(n: u32, p: u32, k: u32, m: u32) -> Result<ExactQuantity> {
    check_dimension(n)?;
    let q = 2 * i64::from(m) - 2 * i64::from(k) - i64::from(n) + 1;
    if q < 0 {
        return Err(SpecfunError::DivergentLine { p, q: 0 }.into());
    }
    let line = beta_line_rational(p, q as u32)?;
    let radial = radial_ratio_to_base(n - 2 + 2 * k, m, n)?;
    Ok(ExactQuantity::new(line * radial, sphere_j(n)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Terms {
    pub i1: ExactQuantity,
    pub i2: ExactQuantity,
    pub i3: ExactQuantity,
    /// `−2(n−2)I₁ + (2n(n−2)/(n−1))I₂ + ((n−2)/(4(n−1)))I₃`.
    pub combination: ExactQuantity,
}

pub fn nonumbilic_step1_terms(n: u32) -> Result<Step1Terms> {
    check_dimension(n)?;
    let ni = i64::from(n);
    let i1 = half_space_moment(n, 3, 0, n)?;
    let i2 = half_space_moment(n, 3, 1, n + 1)?;
    let i3 = half_space_moment(n, 1, 0, n - 1)?;
    let combination = i1
        .scale(&rat(-2 * (ni - 2), 1))
        .checked_add(&i2.scale(&rat(2 * ni * (ni - 2), ni - 1)))?
        .checked_add(&i3.scale(&rat(ni - 2, 4 * (ni - 1))))?;
    Ok(Step1Terms {
        i1,
        i2,
        i3,
        combination,
    })
}

/// Closed-form `A₁` per unit `|h|²`: the step-1 combination times `1/(2n)`.
pub fn nonumbilic_step1_closed(n: u32) -> Result<ExactQuantity> {
    let terms = nonumbilic_step1_terms(n)?;
    Ok(terms.combination.scale(&rat(1, 2 * i64::from(n))))
}

/// `(n−12)/(2n(n−1)(n−3))`, the stated rational part of the step-1 combination.
pub fn nonumbilic_step1_stated(n: u32) -> BigRational {
    let n = i64::from(n);
    rat(n - 12, 2 * n * (n - 1) * (n - 3))
}

/// Multipliers of the curvature invariants in `Σ I_j` (umbilic step 1,
/// before the `1/(2n)` prefactor), all on the base `|S^{n−2}|·J_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct UmbilicClosed {
    pub n: u32,
    pub terms: [ExactQuantity; 6],
    pub rninj2: ExactQuantity,
    pub wbar2: ExactQuantity,
    pub rnn: ExactQuantity,
}

pub fn umbilic_closed_sum(n: u32) -> Result<UmbilicClosed> {
    check_dimension(n)?;
    let ni = i64::from(n);
    // (p, k, m) of each integrand y_n^p |y'|^{2k} ((1+y_n)²+|y'|²)^{−m}.
    let moments = [
        half_space_moment(n, 3, 1, n)?,
        half_space_moment(n, 3, 2, n + 1)?,
        half_space_moment(n, 5, 1, n + 1)?,
        half_space_moment(n, 5, 0, n)?,
        half_space_moment(n, 3, 0, n - 1)?,
        half_space_moment(n, 1, 1, n - 1)?,
    ];
    let c1 = rat(ni - 2, ni - 1);
    let c2 = rat(-ni * (ni - 2), (ni + 1) * (ni - 1));
    let c3 = rat(ni * (ni - 2), 2 * (ni - 1));
    let c4 = rat(-(ni - 2), 2);
    let c5 = rat(-(ni - 2), 8 * (ni - 1));
    let c6 = rat(ni - 2, 48 * (ni - 1) * (ni - 1));
    let half = rat(1, 2);
    // I₁, I₂ carry (½R_,nn + (R_ninj)²); I₃, I₄ carry (R_ninj)²; I₅ R_,nn; I₆ |W̄|².
    let rninj2 = moments[0]
        .scale(&c1)
        .checked_add(&moments[1].scale(&c2))?
        .checked_add(&moments[2].scale(&c3))?
        .checked_add(&moments[3].scale(&c4))?;
    let rnn = moments[0]
        .scale(&(&c1 * &half))
        .checked_add(&moments[1].scale(&(&c2 * &half)))?
        .checked_add(&moments[4].scale(&c5))?;
    let wbar2 = moments[5].scale(&c6);
    let terms = [
        moments[0].scale(&c1),
        moments[1].scale(&c2),
        moments[2].scale(&c3),
        moments[3].scale(&c4),
        moments[4].scale(&c5),
        moments[5].scale(&c6),
    ];
    Ok(UmbilicClosed {
        n,
        terms,
        rninj2,
        wbar2,
        rnn,
    })
}

/// Stated multipliers: `3(n−10)/(n(n−1)(n−3)(n−4)(n−5))` for `(R_ninj)²`, and
/// `(n−2)/(48(n−1)²(n−4)(n−5))·∫r^n/(1+r²)^{n−1}` for `|W̄|²`, both over `|S^{n−2}|J_n`.
pub fn umbilic_stated(n: u32) -> Result<(BigRational, BigRational)> {
    check_dimension(n)?;
    let ni = i64::from(n);
    let r = rat(
        3 * (ni - 10),
        ni * (ni - 1) * (ni - 3) * (ni - 4) * (ni - 5),
    );
    let w = rat(ni - 2, 48 * (ni - 1) * (ni - 1) * (ni - 4) * (ni - 5))
        * radial_ratio_to_base(n, n - 1, n)?;
    Ok((r, w))
}

/// Numerical coefficient with the ingredients of its error bar. Values are
/// carried on three solves: the base grid, the base grid coarsened once, and
/// the base spacing on a domain halved once. Linear combinations act on all
/// three, so drifts are those of the combined quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub base: f64,
    pub coarse: f64,
    pub half_domain: f64,
    pub quad_error: f64,
}

impl Estimate {
    pub fn exact(v: f64) -> Self {
        Estimate {
            base: v,
            coarse: v,
            half_domain: v,
            quad_error: 0.0,
        }
    }

    /// Richardson value from the base and coarsened solves (second order).
    pub fn value(&self) -> f64 {
        (4.0 * self.base - self.coarse) / 3.0
    }

    pub fn grid_drift(&self) -> f64 {
        (self.base - self.coarse).abs()
    }

    pub fn domain_drift(&self) -> f64 {
        (self.base - self.half_domain).abs()
    }

    /// Quadrature estimate plus both drifts.
    pub fn error(&self) -> f64 {
        self.quad_error + self.grid_drift() + self.domain_drift()
    }

    pub fn margin(&self) -> f64 {
        self.value() - self.error()
    }

    pub fn scale(&self, c: f64) -> Self {
        Estimate {
            base: c * self.base,
            coarse: c * self.coarse,
            half_domain: c * self.half_domain,
            quad_error: c.abs() * self.quad_error,
        }
    }

    pub fn add(&self, o: &Estimate) -> Self {
        Estimate {
            base: self.base + o.base,
            coarse: self.coarse + o.coarse,
            half_domain: self.half_domain + o.half_domain,
            quad_error: self.quad_error + o.quad_error,
        }
    }
}

fn rho2(r: f64, s: f64) -> f64 {
    r * r + (1.0 + s) * (1.0 + s)
}

fn moment4(n: u32) -> f64 {
    sphere_moment4(n).to_f64()
}

fn weighted(field: &Field2D, kernel: &Kernel<'_>, n: u32, field_decay: f64) -> Result<QuadResult> {
    let tail = TailSpec::new(field_decay, field.grid().rmax);
    Ok(integrate_field_weighted(
        field,
        kernel,
        (n + 2) as i32,
        &tail,
        DEFAULT_TOL_2D,
    )?)
}

const V_DECAY_SHIFT: f64 = 1.0;
const LAMBDA_DECAY_SHIFT: f64 = 2.0;

/// `A₂ = (4n(n²−4)/3)·m₄·∬ s² ρ₁^{−(n+4)} V r^{n+2}`, per unit `|h|²`.
pub fn nonumbilic_a2(n: u32, v: &Field2D) -> Result<QuadResult> {
    check_dimension(n)?;
    let nf = f64::from(n);
    let w = move |r: f64, s: f64| s * s * rho2(r, s).powf(-0.5 * (nf + 4.0));
    let k = Kernel {
        eval: &w,
        decay: nf + 2.0,
    };
    let c = 4.0 * nf * (nf * nf - 4.0) / 3.0 * moment4(n);
    Ok(weighted(v, &k, n, nf - V_DECAY_SHIFT)?.scaled(c))
}

/// `A₃ = (8n²(n−2)²/3)·m₄·∬ ρ₁^{−4} V² r^{n+2}`, per unit `|h|²`.
pub fn nonumbilic_a3(n: u32, v: &Field2D) -> Result<QuadResult> {
    check_dimension(n)?;
    let nf = f64::from(n);
    let w = |r: f64, s: f64| rho2(r, s).powi(-2);
    let k = Kernel {
        eval: &w,
        decay: 4.0,
    };
    let c = 8.0 * nf * nf * (nf - 2.0).powi(2) / 3.0 * moment4(n);
    Ok(weighted(&v.map(|x| x * x), &k, n, 2.0 * (nf - V_DECAY_SHIFT))?.scaled(c))
}

/// `((n³−4n)/3)·m₄·∬ s³ ρ₁^{−(n+4)} Λ r^{n+2}`, per unit `(R_ninj)²`.
pub fn umbilic_step2(n: u32, lam: &Field2D) -> Result<QuadResult> {
    check_dimension(n)?;
    let nf = f64::from(n);
    let w = move |r: f64, s: f64| s * s * s * rho2(r, s).powf(-0.5 * (nf + 4.0));
    let k = Kernel {
        eval: &w,
        decay: nf + 1.0,
    };
    let c = (nf.powi(3) - 4.0 * nf) / 3.0 * moment4(n);
    Ok(weighted(lam, &k, n, nf - LAMBDA_DECAY_SHIFT)?.scaled(c))
}

/// `(2n²(n−2)²/3)·m₄·∬ ρ₁^{−4} Λ² r^{n+2}`, per unit `(R_ninj)²`.
pub fn umbilic_step3(n: u32, lam: &Field2D) -> Result<QuadResult> {
    check_dimension(n)?;
    let nf = f64::from(n);
    let w = |r: f64, s: f64| rho2(r, s).powi(-2);
    let k = Kernel {
        eval: &w,
        decay: 4.0,
    };
    let c = 2.0 * nf * nf * (nf - 2.0).powi(2) / 3.0 * moment4(n);
    Ok(weighted(&lam.map(|x| x * x), &k, n, 2.0 * (nf - LAMBDA_DECAY_SHIFT))?.scaled(c))
}

/// Grid and solver settings shared by every numerical coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    pub grid: Grid2D,
    pub solve: SolveOptions,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            grid: Grid2D {
                rmax: 40.0,
                smax: 40.0,
                nr: 1024,
                ns: 1024,
            },
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolvedField {
    pub field: Field2D,
    pub report: SolveReport,
}

/// The base solve and its two comparison solves.
#[derive(Debug, Clone)]
pub struct FieldSet {
    pub base: Arc<SolvedField>,
    pub coarse: Arc<SolvedField>,
    pub half_domain: Arc<SolvedField>,
}

impl FieldSet {
    pub fn estimate<F>(&self, f: F) -> Result<Estimate>
    where
        F: Fn(&Field2D) -> Result<QuadResult>,
    {
        let b = f(&self.base.field)?;
        let c = f(&self.coarse.field)?;
        let h = f(&self.half_domain.field)?;
        Ok(Estimate {
            base: b.value,
            coarse: c.value,
            half_domain: h.value,
            quad_error: b.abs_error_estimate,
        })
    }

    /// Richardson-extrapolated point value.
    pub fn probe(&self, r: f64, s: f64) -> f64 {
        (4.0 * self.base.field.sample_cubic(r, s) - self.coarse.field.sample_cubic(r, s)) / 3.0
    }
}

type CacheKey = (AuxProblem, [u64; 2], [usize; 2], u32);
type Slot = Arc<OnceLock<std::result::Result<Arc<SolvedField>, String>>>;

/// Solved fields keyed by problem, grid and far-field depth. Each entry
/// is computed once; concurrent requests for the same key wait for it.
#[derive(Default)]
pub struct FieldCache {
    slots: Mutex<HashMap<CacheKey, Slot>>,
}

impl FieldCache {
    pub fn get_or_solve(
        &self,
        problem: &AuxProblem,
        grid: Grid2D,
        opts: &SolveOptions,
    ) -> Result<Arc<SolvedField>> {
        let key = (
            *problem,
            [grid.rmax.to_bits(), grid.smax.to_bits()],
            [grid.nr, grid.ns],
            opts.far_field_levels,
        );
        let slot = {
            let mut map = self.slots.lock().expect("field cache poisoned");
            Arc::clone(map.entry(key).or_default())
        };
        let entry = slot.get_or_init(|| {
            auxpde::solve_reduced_unchecked(problem, grid, opts)
                .map(|(field, report)| Arc::new(SolvedField { field, report }))
                .map_err(|e| e.to_string())
        });
        entry.clone().map_err(ExpansionError::Solve)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignCertificate {
    pub n: u32,
    pub case: Case,
    pub positive: bool,
    pub margin: f64,
}

impl SignCertificate {
    fn from_estimate(n: u32, case: Case, e: &Estimate, admissible: bool) -> Self {
        let margin = e.margin();
        SignCertificate {
            n,
            case,
            positive: admissible && margin > 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NonumbilicCoefficients {
    pub n: u32,
    pub a1: ExactQuantity,
    pub a2: Estimate,
    pub a3: Estimate,
    /// `K(n)` scaled by the supplied `|h|²`.
    pub k: Estimate,
    pub exploratory: bool,
}

#[derive(Debug, Clone)]
pub struct UmbilicCoefficients {
    pub n: u32,
    pub closed: UmbilicClosed,
    pub step2: Estimate,
    pub step3: Estimate,
    /// Multiplier of `(R_ninj)²`.
    pub a_n: Estimate,
    /// Multiplier of `|W̄|²`: `(1/(n−2))·` the `|W̄|²` part of `Σ I_j`.
    pub b_n: ExactQuantity,
    /// Multiplier of `R_,nn`; identically zero.
    pub rnn_coeff: ExactQuantity,
    /// `a(n)·rninj2 + b(n)·wbar2 + rnn_coeff·rnn2`.
    pub total: Estimate,
    pub exploratory: bool,
}

/// Coefficient pipeline with a shared field cache.
pub struct Pipeline {
    pub config: NumericsConfig,
    cache: FieldCache,
}

impl Pipeline {
    pub fn new(config: NumericsConfig) -> Self {
        Pipeline {
            config,
            cache: FieldCache::default(),
        }
    }

    pub fn cache(&self) -> &FieldCache {
        &self.cache
    }

    pub fn field_set(&self, problem: &AuxProblem) -> Result<FieldSet> {
        let g = self.config.grid;
        let opts = &self.config.solve;
        let half = g.halved_domain();
        Ok(FieldSet {
            base: self.cache.get_or_solve(problem, g, opts)?,
            coarse: self.cache.get_or_solve(problem, g.coarsened(), opts)?,
            half_domain: self.cache.get_or_solve(problem, half, opts)?,
        })
    }

    /// `K(n) = (2n/(n−2))(A₁+A₂) + (n(n+2)/(n−2)²)A₃`, times `|h|²`.
    pub fn lambda2_coefficient(
        &self,
        n: u32,
        curvature: &CurvatureInputs,
    ) -> Result<(NonumbilicCoefficients, SignCertificate)> {
        check_dimension(n)?;
        let fields = self.field_set(&AuxProblem::new(n, 1)?)?;
        let a1 = nonumbilic_step1_closed(n)?;
        let a2 = fields.estimate(|v| nonumbilic_a2(n, v))?;
        let a3 = fields.estimate(|v| nonumbilic_a3(n, v))?;
        let nf = f64::from(n);
        let c1 = 2.0 * nf / (nf - 2.0);
        let c3 = nf * (nf + 2.0) / (nf - 2.0).powi(2);
        let k = Estimate::exact(a1.to_f64())
            .add(&a2)
            .scale(c1)
            .add(&a3.scale(c3))
            .scale(curvature.h2);
        let case = Case::Nonumbilic;
        let cert = SignCertificate::from_estimate(n, case, &k, curvature.h2 > 0.0);
        Ok((
            NonumbilicCoefficients {
                n,
                a1,
                a2,
                a3,
                k,
                exploratory: case.is_exploratory(n),
            },
            cert,
        ))
    }

    /// `a(n) = (2n/(n−2))[(1/(2n))·R-part + step2] + (n(n+2)/(n−2)²)·step3`
    /// and `b(n) = (1/(n−2))·W-part`; the certificate concerns
    /// `a(n)·rninj2 + b(n)·wbar2`.
    pub fn lambda4_coefficients(
        &self,
        n: u32,
        curvature: &CurvatureInputs,
    ) -> Result<(UmbilicCoefficients, SignCertificate)> {
        check_dimension(n)?;
        let fields = self.field_set(&AuxProblem::new(n, 2)?)?;
        let closed = umbilic_closed_sum(n)?;
        let step2 = fields.estimate(|l| umbilic_step2(n, l))?;
        let step3 = fields.estimate(|l| umbilic_step3(n, l))?;
        let nf = f64::from(n);
        let ni = i64::from(n);
        let c1 = 2.0 * nf / (nf - 2.0);
        let c3 = nf * (nf + 2.0) / (nf - 2.0).powi(2);
        let step1_r = closed.rninj2.scale(&rat(1, 2 * ni)).to_f64();
        let a_n = Estimate::exact(step1_r)
            .add(&step2)
            .scale(c1)
            .add(&step3.scale(c3));
        let b_n = closed.wbar2.scale(&rat(1, ni - 2));
        let rnn_coeff = closed.rnn.scale(&(rat(2 * ni, ni - 2) * rat(1, 2 * ni)));
        let total = a_n.scale(curvature.rninj2).add(&Estimate::exact(
            b_n.to_f64() * curvature.wbar2 + rnn_coeff.to_f64() * curvature.rnn2,
        ));
        let case = Case::Umbilic;
        let admissible = curvature.rninj2 + curvature.wbar2 > 0.0;
        let cert = SignCertificate::from_estimate(n, case, &total, admissible);
        Ok((
            UmbilicCoefficients {
                n,
                closed,
                step2,
                step3,
                a_n,
                b_n,
                rnn_coeff,
                total,
                exploratory: case.is_exploratory(n),
            },
            cert,
        ))
    }

    /// One report row for `case` at dimension `n`.
    pub fn report(
        &self,
        case: Case,
        n: u32,
        curvature: &CurvatureInputs,
    ) -> Result<CoefficientReport> {
        match case {
            Case::Nonumbilic => {
                let (c, cert) = self.lambda2_coefficient(n, curvature)?;
                Ok(CoefficientReport {
                    n,
                    case,
                    a1: Some(c.a1.to_f64()),
                    a2: Some(c.a2.value()),
                    a3: Some(c.a3.value()),
                    k: Some(c.k.value()),
                    a_n: None,
                    b_n: None,
                    error_bar: c.k.error(),
                    margin: cert.margin,
                    positive: cert.positive,
                    exploratory: c.exploratory,
                })
            }
            Case::Umbilic => {
                let (c, cert) = self.lambda4_coefficients(n, curvature)?;
                Ok(CoefficientReport {
                    n,
                    case,
                    a1: None,
                    a2: None,
                    a3: None,
                    k: None,
                    a_n: Some(c.a_n.value()),
                    b_n: Some(c.b_n.to_f64()),
                    error_bar: c.total.error(),
                    margin: cert.margin,
                    positive: cert.positive,
                    exploratory: c.exploratory,
                })
            }
        }
    }
}

/// The per-dimension record written to CSV and JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub n: u32,
    pub case: Case,
    #[serde(rename = "A1")]
    pub a1: Option<f64>,
    #[serde(rename = "A2")]
    pub a2: Option<f64>,
    #[serde(rename = "A3")]
    pub a3: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub a_n: Option<f64>,
    pub b_n: Option<f64>,
    pub error_bar: f64,
    pub margin: f64,
    pub positive: bool,
    pub exploratory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientRow {
    pub lambda: f64,
    pub quotient: f64,
    pub excess: f64,
}

/// `(2^{−n}ω_n + Kλ^k)/(2^{−(n−1)}nω_n)^{n/(n−1)}`. The unperturbed ratio
/// equals the ball constant identically, so the quotient is reported as
/// `theta_ball(n) + excess` with the excess `Kλ^k/D` computed directly.
pub fn quotient_expansion(
    n: u32,
    case: Case,
    coefficient: f64,
    lambdas: &[f64],
) -> Vec<QuotientRow> {
    let nf = f64::from(n);
    let area = 2f64.powf(1.0 - nf) * nf * ball_volume(n);
    let denom = area.powf(nf / (nf - 1.0));
    let theta = theta_ball(n);
    lambdas
        .iter()
        .map(|&lambda| {
            let excess = coefficient * lambda.powi(case.order()) / denom;
            QuotientRow {
                lambda,
                quotient: theta + excess,
                excess,
            }
        })
        .collect()
}

/// `K/D`, the limit of `excess/λ^k` as λ → 0.
pub fn excess_limit(n: u32, coefficient: f64) -> f64 {
    let nf = f64::from(n);
    let area = 2f64.powf(1.0 - nf) * nf * ball_volume(n);
    coefficient / area.powf(nf / (nf - 1.0))
}

/// Checks the exact identities of both expansions at dimension `n`.
/// Returns the name of the first failing identity.
pub fn exact_identities_hold(n: u32) -> std::result::Result<(), String> {
    let step1 = nonumbilic_step1_terms(n).map_err(|e| e.to_string())?;
    if step1.combination.coeff() != &nonumbilic_step1_stated(n) {
        return Err(format!("step-1 combination at n={n}"));
    }
    let closed = umbilic_closed_sum(n).map_err(|e| e.to_string())?;
    let (r, w) = umbilic_stated(n).map_err(|e| e.to_string())?;
    if closed.rninj2.coeff() != &r {
        return Err(format!("(R_ninj)^2 multiplier at n={n}"));
    }
    if closed.wbar2.coeff() != &w {
        return Err(format!("|W|^2 multiplier at n={n}"));
    }
    if !closed.rnn.coeff().is_zero() {
        return Err(format!("R_nn cancellation at n={n}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step1_examples() {
        assert!(nonumbilic_step1_terms(12).unwrap().combination.is_zero());
        assert_eq!(
            nonumbilic_step1_terms(13).unwrap().combination.coeff(),
            &rat(1, 3120)
        );
        assert_eq!(
            nonumbilic_step1_terms(10).unwrap().combination.coeff(),
            &rat(-1, 630)
        );
        assert_eq!(
            nonumbilic_step1_closed(13).unwrap().coeff(),
            &rat(1, 3120 * 26)
        );
    }

    #[test]
    fn step1_primitives_match_displayed_forms() {
        for n in 6..=30u32 {
            let t = nonumbilic_step1_terms(n).unwrap();
            let ni = i64::from(n);
            assert_eq!(t.i1.coeff(), &rat(6, ni * (ni - 1) * (ni - 2) * (ni - 3)));
            assert_eq!(
                t.i2.coeff(),
                &(rat(6, ni * (ni - 1) * (ni - 2) * (ni - 3)) * rat(ni - 1, 2 * ni))
            );
            assert_eq!(t.i3.coeff(), &rat(2, (ni - 2) * (ni - 3)));
        }
    }

    #[test]
    fn umbilic_examples() {
        let c10 = umbilic_closed_sum(10).unwrap();
        assert!(c10.rninj2.is_zero());
        let c11 = umbilic_closed_sum(11).unwrap();
        assert_eq!(c11.rninj2.signum(), 1);
        assert_eq!(c11.wbar2.signum(), 1);
        for n in 6..=64 {
            assert!(umbilic_closed_sum(n).unwrap().rnn.is_zero());
            exact_identities_hold(n).unwrap();
        }
    }

    #[test]
    fn estimate_algebra() {
        let e = Estimate {
            base: 1.0,
            coarse: 0.96,
            half_domain: 0.999,
            quad_error: 1e-7,
        };
        assert!((e.value() - (4.0 - 0.96) / 3.0).abs() < 1e-15);
        assert!((e.error() - (1e-7 + 0.04 + 0.001)).abs() < 1e-12);
        let sum = e.add(&e.scale(-1.0));
        assert_eq!(sum.value(), 0.0);
        assert!(Estimate::exact(2.0).error() == 0.0);
    }

    #[test]
    fn quotient_examples() {
        let rows = quotient_expansion(12, Case::Nonumbilic, 0.5, &[0.0, 0.01]);
        assert_eq!(rows[0].quotient, theta_ball(12));
        assert_eq!(rows[0].excess, 0.0);
        assert!(rows[1].excess > 0.0);
        let lim = excess_limit(12, 0.5);
        for lambda in [1e-2, 1e-3] {
            let r = quotient_expansion(12, Case::Nonumbilic, 0.5, &[lambda])[0];
            assert!((r.excess / lambda.powi(2) / lim - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_fields_give_zero() {
        let g = Grid2D::new(20.0, 20.0, 64, 64).unwrap();
        let z = Field2D::zeros(g);
        assert_eq!(nonumbilic_a2(12, &z).unwrap().value, 0.0);
        assert_eq!(nonumbilic_a3(12, &z).unwrap().value, 0.0);
        assert_eq!(umbilic_step2(10, &z).unwrap().value, 0.0);
        assert_eq!(umbilic_step3(10, &z).unwrap().value, 0.0);
    }

    #[test]
    fn case_labels() {
        assert!(Case::Nonumbilic.is_exploratory(11));
        assert!(!Case::Nonumbilic.is_exploratory(12));
        assert!(Case::Umbilic.is_exploratory(9));
        assert_eq!("umbilic".parse::<Case>().unwrap(), Case::Umbilic);
    }
}
