//! Adaptive integration of algebraically decaying integrands on half-lines,
//! and tensor-product integration of grid fields against analytic kernels.

// Quadrature node tables are kept at their published 33-digit precision.
#![allow(clippy::excessive_precision)]

use thiserror::Error;

use crate::auxpde::Field2D;

pub const DEFAULT_TOL_1D: f64 = 1e-10;
pub const DEFAULT_TOL_2D: f64 = 1e-6;

const MAX_PANELS: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("adaptive refinement stalled at value {value:e} with error {error:e} after {evaluations} evaluations")]
    NonConvergence {
        value: f64,
        error: f64,
        evaluations: usize,
    },
    #[error("tail decays like rho^-{exponent}; need exponent > {needed} for convergence")]
    TailDivergence { exponent: f64, needed: f64 },
    #[error("tail fit failed: {0}")]
    FitFailure(String),
    #[error("grid too small for the composite rule: {0}")]
    GridTooSmall(String),
}

pub type Result<T> = std::result::Result<T, QuadError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

impl QuadResult {
    pub fn exact(value: f64) -> Self {
        QuadResult {
            value,
            abs_error_estimate: 0.0,
            evaluations: 0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        QuadResult {
            value: self.value * factor,
            abs_error_estimate: self.abs_error_estimate * factor.abs(),
            evaluations: self.evaluations,
        }
    }

    pub fn plus(&self, other: &QuadResult) -> Self {
        QuadResult {
            value: self.value + other.value,
            abs_error_estimate: self.abs_error_estimate + other.abs_error_estimate,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1], as published to 33 digits.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_value = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_value += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        abs_value: abs_value * half.abs(),
    }
}

/// Globally adaptive Gauss-Kronrod on `[a, b]`, refining the panel with the
/// largest error estimate first. The refinement order is deterministic.
pub fn integrate_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    integrate_interval_split(f, &[a, b], tol)
}

/// Same as [`integrate_interval`] with an initial partition at `breaks`
/// (sorted, first and last are the limits).
pub fn integrate_interval_split<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    tol: f64,
) -> Result<QuadResult> {
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&f, w[0], w[1]))
        .collect();
    let mut evaluations = 15 * panels.len();
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let abs_value: f64 = panels.iter().map(|p| p.abs_value).sum();
        let target = (tol * value.abs()).max(50.0 * f64::EPSILON * abs_value);
        if !(value.is_finite() && error.is_finite()) {
            return Err(QuadError::NonConvergence {
                value,
                error,
                evaluations,
            });
        }
        if error <= target {
            return Ok(QuadResult {
                value,
                abs_error_estimate: error,
                evaluations,
            });
        }
        let (worst, _) = panels.iter().enumerate().fold((0, -1.0), |acc, (i, p)| {
            if p.error > acc.1 {
                (i, p.error)
            } else {
                acc
            }
        });
        let p = panels[worst];
        let mid = 0.5 * (p.a + p.b);
        if panels.len() >= MAX_PANELS || !(mid > p.a && mid < p.b) {
            return Err(QuadError::NonConvergence {
                value,
                error,
                evaluations,
            });
        }
        panels[worst] = gk15(&f, p.a, mid);
        panels.push(gk15(&f, mid, p.b));
        evaluations += 30;
    }
}

/// `∫_lower^∞ f`, compactified once by `r = lower + t/(1−t)`.
pub fn integrate_tail_1d<F: Fn(f64) -> f64>(f: F, lower: f64, tol: f64) -> Result<QuadResult> {
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        let r = lower + t / one_minus;
        let v = f(r) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_interval(g, 0.0, 1.0, tol)
}

/// Algebraic tail model `c·ρ^{−decay_exponent}` beyond `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSpec {
    pub decay_exponent: f64,
    pub cutoff: f64,
}

impl TailSpec {
    pub fn new(decay_exponent: f64, cutoff: f64) -> Self {
        TailSpec {
            decay_exponent,
            cutoff,
        }
    }

    /// Fits `|f| ~ c·r^{−κ}` on `[0.9·cutoff, cutoff]`, returning the model
    /// and the coefficient `c`.
    pub fn fit_1d<F: Fn(f64) -> f64>(f: &F, cutoff: f64) -> Result<(TailSpec, f64)> {
        let (kappa, logc) = fit_power_law(f, 0.9 * cutoff, cutoff, 16)?;
        if kappa <= 1.0 {
            return Err(QuadError::TailDivergence {
                exponent: kappa,
                needed: 1.0,
            });
        }
        Ok((TailSpec::new(kappa, cutoff), logc.exp()))
    }

    /// `∫_cutoff^∞ c·r^{−κ} dr`.
    pub fn tail_integral(&self, coefficient: f64) -> f64 {
        coefficient * self.cutoff.powf(1.0 - self.decay_exponent) / (self.decay_exponent - 1.0)
    }
}

fn fit_power_law<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, samples: usize) -> Result<(f64, f64)> {
    let mut xs = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for k in 0..samples {
        let r = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
        let v = f(r).abs();
        if !(v > 0.0 && v.is_finite()) {
            return Err(QuadError::FitFailure(format!(
                "non-positive sample {v:e} at r={r}"
            )));
        }
        xs.push(r.ln());
        ys.push(v.ln());
    }
    let (slope, intercept) = least_squares_line(&xs, &ys);
    Ok((-slope, intercept))
}

pub(crate) fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `∫_lower^cutoff f` adaptively plus a power-law tail fitted on the last 10%.
pub fn integrate_truncated_with_tail<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    cutoff: f64,
    tol: f64,
) -> Result<QuadResult> {
    let body = integrate_interval(&f, lower, cutoff, tol)?;
    let (spec, c) = TailSpec::fit_1d(&f, cutoff)?;
    let tail = spec.tail_integral(c);
    // Spread between the two half-window fits bounds the model error.
    let (k_in, c_in) = fit_power_law(&f, 0.9 * cutoff, 0.95 * cutoff, 8)?;
    let (k_out, c_out) = fit_power_law(&f, 0.95 * cutoff, cutoff, 8)?;
    let spread = (TailSpec::new(k_in, cutoff).tail_integral(c_in.exp())
        - TailSpec::new(k_out, cutoff).tail_integral(c_out.exp()))
    .abs();
    Ok(QuadResult {
        value: body.value + tail,
        abs_error_estimate: body.abs_error_estimate + spread,
        evaluations: body.evaluations + 32,
    })
}

/// Finite-difference weights for the `order`-th derivative at `x0` from
/// samples at `xs` (Fornberg's recursion).
pub fn fd_weights(x0: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

const END_STENCIL: usize = 8;

/// One-sided estimates of the first, third and fifth derivatives at both
/// ends of equally spaced samples whose first point sits `offset·h` inside.
fn end_derivatives(values: &[f64], h: f64, offset: f64) -> ([f64; 3], [f64; 3]) {
    let pts: Vec<f64> = (0..END_STENCIL).map(|k| (k as f64 + offset) * h).collect();
    let weights: Vec<Vec<f64>> = [1, 3, 5]
        .iter()
        .map(|&o| fd_weights(0.0, &pts, o))
        .collect();
    let dot = |w: &[f64], vals: &mut dyn Iterator<Item = f64>| {
        w.iter().zip(vals).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut left = [0.0; 3];
    let mut right = [0.0; 3];
    for (k, w) in weights.iter().enumerate() {
        left[k] = dot(w, &mut values.iter().copied());
        // Mirrored right end: odd derivatives flip sign.
        right[k] = -dot(w, &mut values.iter().rev().copied());
    }
    (left, right)
}

/// Midpoint rule on cell-centred samples over `[0, n·h]` with
/// Euler-Maclaurin end corrections. Returns `(value, size of last term)`.
fn corrected_midpoint(values: &[f64], h: f64) -> (f64, f64) {
    let sum: f64 = values.iter().sum::<f64>() * h;
    let (a, b) = end_derivatives(values, h, 0.5);
    let c2 = h * h / 24.0 * (b[0] - a[0]);
    let c4 = -7.0 * h.powi(4) / 5760.0 * (b[1] - a[1]);
    let c6 = 31.0 * h.powi(6) / 967_680.0 * (b[2] - a[2]);
    (sum + c2 + c4 + c6, c6.abs())
}

/// Trapezoid rule on nodes `0, h, …, (n−1)h` with Euler-Maclaurin end corrections.
fn corrected_trapezoid(values: &[f64], h: f64) -> (f64, f64) {
    let n = values.len();
    let sum = h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]));
    let (a, b) = end_derivatives(values, h, 0.0);
    let c2 = -h * h / 12.0 * (b[0] - a[0]);
    let c4 = h.powi(4) / 720.0 * (b[1] - a[1]);
    let c6 = -h.powi(6) / 30_240.0 * (b[2] - a[2]);
    (sum + c2 + c4 + c6, c6.abs())
}

/// Analytic weight `w(r, s)` with `w ~ ρ^{−decay}` as `ρ = |(r, 1+s)| → ∞`.
pub struct Kernel<'a> {
    pub eval: &'a (dyn Fn(f64, f64) -> f64 + Sync),
    pub decay: f64,
}

/// `∬ w(r,s)·r^{radial_power}·F(r,s) dr ds` over the quarter plane: a
/// corrected composite rule on the field's own grid plus a separable
/// algebraic tail outside it. `tail.decay_exponent` is the decay rate of the
/// field itself; the integrand then decays like `ρ^{−β}` with
/// `β = κ + decay(w) − radial_power`.
pub fn integrate_field_weighted(
    field: &Field2D,
    weight: &Kernel<'_>,
    radial_power: i32,
    tail: &TailSpec,
    tol: f64,
) -> Result<QuadResult> {
    let grid = field.grid();
    let (nr, ns) = (grid.nr, grid.ns);
    if nr < 10 || ns < 10 {
        return Err(QuadError::GridTooSmall(format!("{nr}x{ns}")));
    }
    let beta = tail.decay_exponent + weight.decay - f64::from(radial_power);
    if beta <= 2.0 {
        return Err(QuadError::TailDivergence {
            exponent: beta,
            needed: 2.0,
        });
    }
    let (dr, ds) = (grid.dr(), grid.ds());
    let rs: Vec<f64> = (0..nr).map(|i| grid.r(i)).collect();
    let ss: Vec<f64> = (0..ns).map(|j| grid.s(j)).collect();
    let integrand: Vec<f64> = (0..ns)
        .flat_map(|j| {
            let rs = &rs;
            let s = ss[j];
            (0..nr).map(move |i| {
                let v = field.get(i, j);
                if v == 0.0 {
                    0.0
                } else {
                    (weight.eval)(rs[i], s) * rs[i].powi(radial_power) * v
                }
            })
        })
        .collect();
    let g = |i: usize, j: usize| integrand[j * nr + i];

    let mut row_integrals = Vec::with_capacity(ns);
    let mut err = 0.0;
    for j in 0..ns {
        let (v, e) = corrected_midpoint(&integrand[j * nr..(j + 1) * nr], dr);
        row_integrals.push(v);
        err += e * ds;
    }
    let (body, e_s) = corrected_trapezoid(&row_integrals, ds);
    err += e_s;

    // Separable tail: rows extended in r, columns extended in s, and the corner.
    let r_edge = grid.rmax;
    let s_edge = grid.smax;
    let i0 = (nr * 9) / 10;
    let j0 = (ns * 9) / 10;
    let mut strip_r = Vec::with_capacity(ns);
    for j in 0..ns {
        let (num, den) = (i0..nr).fold((0.0, 0.0), |(n, d), i| {
            let basis = rs[i].powf(-beta);
            (n + g(i, j) * basis, d + basis * basis)
        });
        let c = num / den;
        strip_r.push(c * r_edge.powf(1.0 - beta) / (beta - 1.0));
    }
    let tail_r = ds * (strip_r.iter().sum::<f64>() - 0.5 * (strip_r[0] + strip_r[ns - 1]));
    let mut tail_s = 0.0;
    for i in 0..nr {
        let (num, den) = (j0..ns).fold((0.0, 0.0), |(n, d), j| {
            let basis = (1.0 + ss[j]).powf(-beta);
            (n + g(i, j) * basis, d + basis * basis)
        });
        tail_s += dr * (num / den) * (1.0 + s_edge).powf(1.0 - beta) / (beta - 1.0);
    }
    let half = 0.5 * beta;
    let (num, den) = (j0..ns).fold((0.0, 0.0), |acc, j| {
        (i0..nr).fold(acc, |(n, d), i| {
            let basis = (rs[i] / r_edge).powf(-half) * ((1.0 + ss[j]) / (1.0 + s_edge)).powf(-half);
            (n + g(i, j) * basis, d + basis * basis)
        })
    });
    let corner = (num / den) * r_edge * (1.0 + s_edge) / ((half - 1.0) * (half - 1.0));
    let tail_total = tail_r + tail_s + corner;
    let value = body + tail_total;
    err += 0.25 * tail_total.abs();
    err = err.max(tol * value.abs() * 1e-3);

    Ok(QuadResult {
        value,
        abs_error_estimate: err,
        evaluations: nr * ns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxpde::{Field2D, Grid2D};
    use crate::specfun::beta_half;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let r = integrate_interval(|x| 3.0 * x * x, 0.0, 2.0, 1e-14).unwrap();
        assert!((r.value - 8.0).abs() < 1e-14);
        let r = integrate_interval(|x: f64| x.powi(21), -1.0, 1.0, 1e-14).unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn tail_examples() {
        let r = integrate_tail_1d(|x| 1.0 / (1.0 + x * x), 0.0, 1e-13).unwrap();
        assert!((r.value - PI / 2.0).abs() < 1e-12);
        let r = integrate_tail_1d(
            |x: f64| x.powi(4) / (1.0 + x * x).powi(6),
            0.0,
            DEFAULT_TOL_1D,
        )
        .unwrap();
        assert!(rel(r.value, 3.0 * PI / 512.0) < 1e-10);
        let r = integrate_tail_1d(
            |x: f64| x.powi(10) / (1.0 + x * x).powi(10),
            0.0,
            DEFAULT_TOL_1D,
        )
        .unwrap();
        assert!(rel(r.value, beta_half(10, 10).unwrap()) < 1e-10);
        assert!(r.abs_error_estimate >= 0.0 && r.evaluations > 0);
    }

    #[test]
    fn nonconvergence_is_reported() {
        // 1/x on (0, 1] has no finite integral.
        let out = integrate_interval(|x| 1.0 / x, 0.0, 1.0, 1e-12);
        assert!(matches!(out, Err(QuadError::NonConvergence { .. })));
    }

    #[test]
    fn truncated_tail_reproduces_full_integral() {
        let f = |r: f64| r.powi(3) / (1.0 + r * r).powi(6);
        let full = beta_half(3, 6).unwrap();
        let r = integrate_truncated_with_tail(f, 0.0, 20.0, 1e-13).unwrap();
        assert!(rel(r.value, full) < 1e-8);
    }

    #[test]
    fn tail_fit_rejects_slow_decay() {
        let f = |r: f64| 1.0 / (1.0 + r);
        assert!(matches!(
            TailSpec::fit_1d(&f, 20.0),
            Err(QuadError::TailDivergence { .. })
        ));
    }

    #[test]
    fn fornberg_weights() {
        let w = fd_weights(0.0, &[0.5, 1.5, 2.5], 1);
        for (a, b) in w.iter().zip([-2.0, 3.0, -1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        for (a, b) in w.iter().zip([1.0, -2.0, 1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    fn uniform_kernel() -> impl Fn(f64, f64) -> f64 + Sync {
        |_r, _s| 1.0
    }

    #[test]
    fn zero_field_integrates_to_zero() {
        let grid = Grid2D::new(20.0, 20.0, 64, 64).unwrap();
        let field = Field2D::zeros(grid);
        let w = uniform_kernel();
        let k = Kernel {
            eval: &w,
            decay: 20.0,
        };
        let out =
            integrate_field_weighted(&field, &k, 2, &TailSpec::new(5.0, 20.0), DEFAULT_TOL_2D)
                .unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn constant_field_against_bubble_power() {
        let n = 8;
        let grid = Grid2D::new(20.0, 20.0, 1024, 1024).unwrap();
        let field = Field2D::from_fn(grid, |_, _| 1.0);
        let w = move |r: f64, s: f64| (r * r + (1.0 + s) * (1.0 + s)).powi(-n);
        let k = Kernel {
            eval: &w,
            decay: 2.0 * n as f64,
        };
        let out =
            integrate_field_weighted(&field, &k, n - 2, &TailSpec::new(0.0, 20.0), DEFAULT_TOL_2D)
                .unwrap();
        let expected = beta_half(n as u32 - 2, n as u32).unwrap() / n as f64;
        assert!(
            rel(out.value, expected) < 1e-6,
            "{} vs {expected}",
            out.value
        );
    }

    #[test]
    fn weighted_integration_is_linear() {
        let grid = Grid2D::new(20.0, 24.0, 96, 80).unwrap();
        let f1 = Field2D::from_fn(grid, |r, s| s * (r * r + (1.0 + s) * (1.0 + s)).powf(-4.0));
        let f2 = Field2D::from_fn(grid, |r, s| s * s * (-0.1 * (r + s)).exp());
        let (a, b) = (0.7, -2.3);
        let combo = f1.zip_map(&f2, |x, y| a * x + b * y);
        let w = |r: f64, s: f64| (r * r + (1.0 + s) * (1.0 + s)).powf(-3.0);
        let k = Kernel {
            eval: &w,
            decay: 6.0,
        };
        let spec = TailSpec::new(7.0, 20.0);
        let i1 = integrate_field_weighted(&f1, &k, 2, &spec, DEFAULT_TOL_2D)
            .unwrap()
            .value;
        let i2 = integrate_field_weighted(&f2, &k, 2, &spec, DEFAULT_TOL_2D)
            .unwrap()
            .value;
        let ic = integrate_field_weighted(&combo, &k, 2, &spec, DEFAULT_TOL_2D)
            .unwrap()
            .value;
        assert!((ic - (a * i1 + b * i2)).abs() < 1e-13 * (a * i1).abs().max((b * i2).abs()));
    }

    #[test]
    fn slow_tail_is_rejected() {
        let grid = Grid2D::new(20.0, 20.0, 32, 32).unwrap();
        let field = Field2D::from_fn(grid, |_, _| 1.0);
        let w = |_r: f64, _s: f64| 1.0;
        let k = Kernel {
            eval: &w,
            decay: 1.0,
        };
        let out =
            integrate_field_weighted(&field, &k, 0, &TailSpec::new(0.5, 20.0), DEFAULT_TOL_2D);
        assert!(matches!(out, Err(QuadError::TailDivergence { .. })));
    }
}
