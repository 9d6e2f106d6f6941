//! Reduced half-space Poisson problems
//! `−∂rr V − ((n+2)/r)∂r V − ∂ss V = s^p (r² + (1+s)²)^{−(n+2)/2}`
//! on a truncated quarter plane, with zero data on `s = 0`.

pub mod grid;
pub mod io;
pub mod oracle;
pub mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{least_squares_line, QuadError};

pub use grid::{Field2D, Grid2D};
pub use oracle::{green_potential, oracle_point};
pub use solver::ReducedOperator;

#[derive(Debug, Error)]
pub enum AuxError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid too coarse to resolve the source peak: dr = {dr}, ds = {ds} (need <= {limit})")]
    GridTooCoarse { dr: f64, ds: f64, limit: f64 },
    #[error("solver diverged: residual {residual:e} after {sweeps} sweeps")]
    SolverDivergence { residual: f64, sweeps: usize },
    #[error("decay fit failed: {0}")]
    FitFailure(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed field file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, AuxError>;

pub const MAX_SPACING: f64 = 0.1;

/// Source power `p = 1` gives the nonumbilic field V, `p = 2` the umbilic field Λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuxProblem {
    pub n: u32,
    pub p: u32,
}

impl AuxProblem {
    pub fn new(n: u32, p: u32) -> Result<Self> {
        if n < 6 {
            return Err(AuxError::InvalidProblem(format!(
                "dimension n must be >= 6, got {n}"
            )));
        }
        if p != 1 && p != 2 {
            return Err(AuxError::InvalidProblem(format!(
                "source power must be 1 or 2, got {p}"
            )));
        }
        Ok(AuxProblem { n, p })
    }

    /// Coefficient `m` of `(m/r)∂r`: the field is radial in `ℝ^{m+1}`.
    pub fn radial_power(&self) -> f64 {
        f64::from(self.n + 2)
    }

    pub fn source(&self, r: f64, s: f64) -> f64 {
        s.powi(self.p as i32) * (r * r + (1.0 + s) * (1.0 + s)).powf(-0.5 * f64::from(self.n + 2))
    }

    /// Algebraic decay rate of the solution in `ρ₁ = |(r, 1+s)|`.
    pub fn expected_decay(&self) -> f64 {
        f64::from(self.n) - f64::from(self.p)
    }

    pub fn label(&self) -> &'static str {
        if self.p == 1 {
            "v"
        } else {
            "lambda"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    /// Number of homogeneous-Dirichlet passes on domains 2×, 4×, … larger
    /// whose solutions supply the far-field data of the next finer pass.
    pub far_field_levels: u32,
    pub max_sweeps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            far_field_levels: 2,
            max_sweeps: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub residual_rel: f64,
    pub iterations: usize,
    pub decay_fit_exponent: Option<f64>,
    pub positivity_violations: usize,
    pub componentwise_residual: f64,
    pub far_field_levels: u32,
}

fn source_vector(op: &ReducedOperator, source: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let g = *op.grid();
    let mut f = vec![0.0; g.len()];
    for j in 1..g.ns - 1 {
        let s = g.s(j);
        for i in 0..g.nr - 1 {
            f[j * g.nr + i] = source(g.r(i), s);
        }
    }
    f
}

fn single_pass(
    problem: &AuxProblem,
    grid: Grid2D,
    far: Option<&Field2D>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64, solver::RefineStats)> {
    let op = ReducedOperator::new(grid, problem.radial_power());
    let f = source_vector(&op, &|r, s| problem.source(r, s));
    let mut x = vec![0.0; grid.len()];
    if let Some(coarse) = far {
        let (nr, ns) = (grid.nr, grid.ns);
        for i in 0..nr {
            x[(ns - 1) * nr + i] = coarse.sample(grid.r(i), grid.smax);
        }
        for j in 1..ns {
            x[j * nr + nr - 1] = coarse.sample(grid.r(nr - 1), grid.s(j));
        }
    }
    let stats = op.solve_refined(&f, &mut x, opts.max_sweeps);
    let residual = op.relative_residual(&x, &f);
    if !residual.is_finite() || residual > opts.tol {
        return Err(AuxError::SolverDivergence {
            residual,
            sweeps: stats.sweeps,
        });
    }
    Ok((x, residual, stats))
}

/// Discrete solution with default options; see [`solve_reduced_with`].
pub fn solve_reduced(
    problem: &AuxProblem,
    grid: Grid2D,
    tol: f64,
) -> Result<(Field2D, SolveReport)> {
    solve_reduced_with(
        problem,
        grid,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

/// Solves on `grid`, taking far-field Dirichlet data from a chain of coarser
/// solves on nested larger domains (the outermost one homogeneous).
pub fn solve_reduced_with(
    problem: &AuxProblem,
    grid: Grid2D,
    opts: &SolveOptions,
) -> Result<(Field2D, SolveReport)> {
    if grid.dr() > MAX_SPACING || grid.ds() > MAX_SPACING {
        return Err(AuxError::GridTooCoarse {
            dr: grid.dr(),
            ds: grid.ds(),
            limit: MAX_SPACING,
        });
    }
    solve_reduced_unchecked(problem, grid, opts)
}

/// As [`solve_reduced_with`] without the spacing precondition. Used for the
/// coarsened comparison solves behind error bars.
pub fn solve_reduced_unchecked(
    problem: &AuxProblem,
    grid: Grid2D,
    opts: &SolveOptions,
) -> Result<(Field2D, SolveReport)> {
    let mut far: Option<Field2D> = None;
    for level in (1..=opts.far_field_levels).rev() {
        let g = grid.scaled_domain(f64::from(1u32 << level));
        let (x, _, _) = single_pass(problem, g, far.as_ref(), opts)?;
        far = Some(Field2D::from_values_unchecked(g, x));
    }
    let (x, residual_rel, stats) = single_pass(problem, grid, far.as_ref(), opts)?;
    let field = Field2D::new(grid, x)?;
    let positivity_violations = positivity_violations(&field);
    let decay_fit_exponent = decay_fit(&field).ok();
    Ok((
        field,
        SolveReport {
            residual_rel,
            iterations: stats.sweeps,
            decay_fit_exponent,
            positivity_violations,
            componentwise_residual: stats.componentwise_residual,
            far_field_levels: opts.far_field_levels,
        },
    ))
}

/// Non-positive values off the `s = 0` wall, plus any negative wall value.
pub fn positivity_violations(field: &Field2D) -> usize {
    let g = field.grid();
    let wall = field.row(0).iter().filter(|&&v| v < 0.0).count();
    let interior = (1..g.ns)
        .flat_map(|j| field.row(j).iter())
        .filter(|&&v| v <= 0.0)
        .count();
    wall + interior
}

/// `‖A·field − source‖_w / ‖source‖_w` in the `r^{n+2}` weight.
pub fn residual_norm(field: &Field2D, problem: &AuxProblem) -> f64 {
    residual_norm_with(field, problem.radial_power(), &|r, s| problem.source(r, s))
}

/// As [`residual_norm`] for the operator with radial coefficient `m` and an
/// arbitrary source.
pub fn residual_norm_with(field: &Field2D, m: f64, source: &dyn Fn(f64, f64) -> f64) -> f64 {
    let op = ReducedOperator::new(*field.grid(), m);
    let f = source_vector(&op, source);
    op.relative_residual(field.values(), &f)
}

const DECAY_BINS: usize = 24;
const DECAY_CONSISTENCY: f64 = 0.15;

/// Least-squares rate κ in `field ~ ρ₁^{−κ}·Θ(angle)` over the annulus
/// `0.4L ≤ ρ₁ ≤ 0.8L`, `L = min(rmax, smax)`, with one free level per
/// angular bin. A fit whose inner and outer halves disagree by more than 15%
/// is rejected as not algebraic.
pub fn decay_fit(field: &Field2D) -> Result<f64> {
    let g = field.grid();
    let l = g.rmax.min(g.smax);
    let s_floor = 0.05 * l;
    let (lo, mid, hi) = (0.4 * l, 0.6 * l, 0.8 * l);
    let mut inner = vec![Vec::new(); DECAY_BINS];
    let mut outer = vec![Vec::new(); DECAY_BINS];
    for j in 1..g.ns {
        let s = g.s(j);
        if s < s_floor {
            continue;
        }
        for i in 0..g.nr {
            let r = g.r(i);
            let rho = r.hypot(1.0 + s);
            if !(lo..=hi).contains(&rho) {
                continue;
            }
            let v = field.get(i, j);
            if !(v > 0.0 && v.is_normal()) {
                return Err(AuxError::FitFailure(format!(
                    "non-positive or underflowing value {v:e} at (r, s) = ({r:.3}, {s:.3})"
                )));
            }
            let angle = (1.0 + s).atan2(r);
            let bin = ((angle / std::f64::consts::FRAC_PI_2) * DECAY_BINS as f64) as usize;
            let target = if rho < mid { &mut inner } else { &mut outer };
            target[bin.min(DECAY_BINS - 1)].push((rho.ln(), v.ln()));
        }
    }
    let k_in = fixed_effects_slope(&inner)?;
    let k_out = fixed_effects_slope(&outer)?;
    let both: Vec<Vec<(f64, f64)>> = inner
        .into_iter()
        .zip(outer)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    let kappa = fixed_effects_slope(&both)?;
    if (k_in - k_out).abs() > DECAY_CONSISTENCY * kappa.abs() {
        return Err(AuxError::FitFailure(format!(
            "decay is not algebraic: local rates {k_in:.3} (inner) vs {k_out:.3} (outer)"
        )));
    }
    Ok(kappa)
}

fn fixed_effects_slope(bins: &[Vec<(f64, f64)>]) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for bin in bins.iter().filter(|b| b.len() >= 2) {
        let n = bin.len() as f64;
        let mx = bin.iter().map(|p| p.0).sum::<f64>() / n;
        let my = bin.iter().map(|p| p.1).sum::<f64>() / n;
        xs.extend(bin.iter().map(|p| p.0 - mx));
        ys.extend(bin.iter().map(|p| p.1 - my));
    }
    if xs.len() < 8 {
        return Err(AuxError::FitFailure(
            "too few samples in the outer annulus".into(),
        ));
    }
    let (slope, _) = least_squares_line(&xs, &ys);
    Ok(-slope)
}

/// Max relative error of a central-difference check that
/// `−∂rr f − ((n−2)/r)∂r f − ∂ss f = (r² + (1+s)²)^{−(n+2)/2}` for
/// `f = s·(r² + (1+s)²)^{−n/2}/(2n)`.
pub fn verify_kernel_identity(n: u32, points: &[(f64, f64)], h: f64) -> f64 {
    let nf = f64::from(n);
    let f = |r: f64, s: f64| s * (r * r + (1.0 + s) * (1.0 + s)).powf(-0.5 * nf) / (2.0 * nf);
    points
        .iter()
        .map(|&(r, s)| {
            let c = f(r, s);
            let frr = (f(r + h, s) - 2.0 * c + f(r - h, s)) / (h * h);
            let fss = (f(r, s + h) - 2.0 * c + f(r, s - h)) / (h * h);
            let fr = (f(r + h, s) - f(r - h, s)) / (2.0 * h);
            // ∂r f / r is even and smooth; near the axis use its limit ∂rr f.
            let radial = if r > h {
                (nf - 2.0) * fr / r
            } else {
                (nf - 2.0) * frr
            };
            let lhs = -(frr + radial + fss);
            let rhs = (r * r + (1.0 + s) * (1.0 + s)).powf(-0.5 * (nf + 2.0));
            ((lhs - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Max nodal error of the discrete solve of `−Δ_m u = f` against the
/// manufactured solution `u* = s·e^{−r²−s²}`, whose source is
/// `s·e^{−r²−s²}(2m + 8 − 4r² − 4s²)`; boundary data is taken from `u*`.
pub fn manufactured_error(grid: Grid2D, m: f64) -> f64 {
    let exact = |r: f64, s: f64| s * (-r * r - s * s).exp();
    let source = |r: f64, s: f64| exact(r, s) * (2.0 * m + 8.0 - 4.0 * r * r - 4.0 * s * s);
    let op = ReducedOperator::new(grid, m);
    let mut f = vec![0.0; grid.len()];
    let mut x = vec![0.0; grid.len()];
    for j in 0..grid.ns {
        for i in 0..grid.nr {
            let k = grid.index(i, j);
            if op.is_unknown(i, j) {
                f[k] = source(grid.r(i), grid.s(j));
            } else {
                x[k] = exact(grid.r(i), grid.s(j));
            }
        }
    }
    op.solve_refined(&f, &mut x, SolveOptions::default().max_sweeps);
    let mut worst: f64 = 0.0;
    for j in 0..grid.ns {
        for i in 0..grid.nr {
            worst = worst.max((x[grid.index(i, j)] - exact(grid.r(i), grid.s(j))).abs());
        }
    }
    worst
}
