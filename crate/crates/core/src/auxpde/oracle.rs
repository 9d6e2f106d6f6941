//! Independent evaluation of half-space potentials by direct quadrature of
//! the image-charge Green function.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::quadrature::{integrate_interval, integrate_tail_1d, QuadError};
use crate::specfun::sphere_area;

use super::{AuxError, AuxProblem, Result};

/// `G(x,y) = c_N (|x−y|^{2−N} − |x−y*|^{2−N})` with `c_N = 1/((N−2)|S^{N−1}|)`,
/// after integrating out the `S^{N−2}` directions of the radial factor:
/// the zonal measure contributes `|S^{N−3}| sin^{N−3}θ dθ`.
fn kernel_constant(dim: u32) -> f64 {
    sphere_area(dim - 3) / ((f64::from(dim) - 2.0) * sphere_area(dim - 1))
}

/// `∫₀^π [d₋^{−k} − d₊^{−k}] sin^{N−3}θ dθ` with `d∓ = |x−y|², |x−y*|²`.
fn angular(dim: u32, r: f64, s: f64, rho: f64, sigma: f64, tol: f64, failed: &AtomicBool) -> f64 {
    let k = 0.5 * (f64::from(dim) - 2.0);
    let sin_pow = dim - 3;
    let dr2 = (r - rho) * (r - rho);
    let ds2 = (s - sigma) * (s - sigma);
    let two_b = 4.0 * r * rho;
    let gap = 4.0 * s * sigma;
    let f = |theta: f64| {
        let half = (0.5 * theta).sin();
        let d = dr2 + two_b * half * half + ds2;
        // d₋^{−k}(1 − (1 + gap/d)^{−k}), evaluated without cancellation.
        let diff = -(-k * (gap / d).ln_1p()).exp_m1();
        d.powf(-k) * diff * theta.sin().powi(sin_pow as i32)
    };
    match integrate_interval(f, 0.0, std::f64::consts::PI, tol) {
        Ok(q) => q.value,
        Err(QuadError::NonConvergence { value, .. }) => {
            failed.store(true, Ordering::Relaxed);
            value
        }
        Err(_) => {
            failed.store(true, Ordering::Relaxed);
            f64::NAN
        }
    }
}

fn halfline<F: Fn(f64) -> f64>(f: F, split: f64, tol: f64, failed: &AtomicBool) -> f64 {
    let mut total = 0.0;
    if split > 0.0 {
        total += unwrap_lenient(integrate_interval(&f, 0.0, split, tol), failed);
    }
    total + unwrap_lenient(integrate_tail_1d(&f, split, tol), failed)
}

fn unwrap_lenient(
    q: std::result::Result<crate::quadrature::QuadResult, QuadError>,
    failed: &AtomicBool,
) -> f64 {
    match q {
        Ok(q) => q.value,
        Err(QuadError::NonConvergence { value, .. }) => {
            failed.store(true, Ordering::Relaxed);
            value
        }
        Err(_) => {
            failed.store(true, Ordering::Relaxed);
            f64::NAN
        }
    }
}

/// Potential `∫ G(x, y) f(y) dy` in `ℝ^dim₊` for an axisymmetric source
/// `f(ρ, σ)`, evaluated at `x = (r, s)`.
pub fn green_potential<F>(dim: u32, source: F, r: f64, s: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if dim < 4 {
        return Err(AuxError::InvalidProblem(format!(
            "oracle needs dimension >= 4, got {dim}"
        )));
    }
    if !(r >= 0.0 && s >= 0.0) {
        return Err(AuxError::InvalidProblem(format!(
            "oracle point ({r}, {s}) outside the quarter plane"
        )));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let failed = AtomicBool::new(false);
    let radial_power = (dim - 2) as i32;
    let inner = |sigma: f64| {
        let g = |rho: f64| {
            let src = source(rho, sigma);
            if src == 0.0 {
                return 0.0;
            }
            src * rho.powi(radial_power) * angular(dim, r, s, rho, sigma, 0.3 * tol, &failed)
        };
        halfline(g, r, 0.5 * tol, &failed)
    };
    let value = kernel_constant(dim) * halfline(inner, s, tol, &failed);
    if failed.load(Ordering::Relaxed) || !value.is_finite() {
        return Err(AuxError::Quadrature(QuadError::NonConvergence {
            value,
            error: f64::NAN,
            evaluations: 0,
        }));
    }
    Ok(value)
}

/// Oracle value of the auxiliary field at `(r, s)`: the Green potential of
/// the problem's source in dimension `n + 4`.
pub fn oracle_point(problem: &AuxProblem, r: f64, s: f64, tol: f64) -> Result<f64> {
    green_potential(
        problem.n + 4,
        |rho, sigma| problem.source(rho, sigma),
        r,
        s,
        tol,
    )
}
