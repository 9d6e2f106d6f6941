use serde::{Deserialize, Serialize};

use super::{AuxError, Result};

pub const MIN_CELLS: usize = 16;
pub const MIN_EXTENT: f64 = 20.0;

/// Truncated quarter plane `[0, rmax] × [0, smax]`: cell-centred in r
/// (first sample at Δr/2), node-based in s (first row on s = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub rmax: f64,
    pub smax: f64,
    pub nr: usize,
    pub ns: usize,
}

impl Grid2D {
    pub fn new(rmax: f64, smax: f64, nr: usize, ns: usize) -> Result<Self> {
        if nr < MIN_CELLS || ns < MIN_CELLS {
            return Err(AuxError::InvalidGrid(format!(
                "need nr, ns >= {MIN_CELLS}, got {nr}x{ns}"
            )));
        }
        if !(rmax >= MIN_EXTENT && smax >= MIN_EXTENT && rmax.is_finite() && smax.is_finite()) {
            return Err(AuxError::InvalidGrid(format!(
                "need rmax, smax >= {MIN_EXTENT}, got {rmax} x {smax}"
            )));
        }
        Ok(Grid2D { rmax, smax, nr, ns })
    }

    /// Same geometry without the size checks; used for internal far-field passes.
    pub(crate) fn unchecked(rmax: f64, smax: f64, nr: usize, ns: usize) -> Self {
        Grid2D { rmax, smax, nr, ns }
    }

    pub fn dr(&self) -> f64 {
        self.rmax / self.nr as f64
    }

    pub fn ds(&self) -> f64 {
        self.smax / (self.ns - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr()
    }

    pub fn s(&self, j: usize) -> f64 {
        j as f64 * self.ds()
    }

    pub fn len(&self) -> usize {
        self.nr * self.ns
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nr + i
    }

    /// Both cell counts doubled on the same domain.
    pub fn refined(&self) -> Grid2D {
        Grid2D::unchecked(self.rmax, self.smax, 2 * self.nr, 2 * self.ns - 1)
    }

    /// Both cell counts halved on the same domain.
    pub fn coarsened(&self) -> Grid2D {
        Grid2D::unchecked(self.rmax, self.smax, self.nr / 2, self.ns.div_ceil(2))
    }

    /// Domain halved at (nearly) the same spacing.
    pub fn halved_domain(&self) -> Grid2D {
        Grid2D::unchecked(
            0.5 * self.rmax,
            0.5 * self.smax,
            self.nr / 2,
            self.ns.div_ceil(2),
        )
    }

    /// Domain scaled by `factor` with the cell counts unchanged.
    pub fn scaled_domain(&self, factor: f64) -> Grid2D {
        Grid2D::unchecked(self.rmax * factor, self.smax * factor, self.nr, self.ns)
    }
}

/// Grid samples stored s-major: `values[j * nr + i]` is the value at `(r_i, s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(AuxError::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(AuxError::InvalidGrid(format!(
                "non-finite value at index {k}"
            )));
        }
        Ok(Field2D { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid2D, values: Vec<f64>) -> Self {
        Field2D { grid, values }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Field2D {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid2D, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ns {
            let s = grid.s(j);
            for i in 0..grid.nr {
                values.push(f(grid.r(i), s));
            }
        }
        Field2D { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nr + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.grid.nr..(j + 1) * self.grid.nr]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field2D {
        Field2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field2D, f: F) -> Field2D {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Field2D {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when the s = 0 row is identically zero.
    pub fn satisfies_dirichlet(&self) -> bool {
        self.row(0).iter().all(|&v| v == 0.0)
    }

    /// Number of strictly negative values.
    pub fn negative_count(&self) -> usize {
        self.values.iter().filter(|&&v| v < 0.0).count()
    }

    /// Bilinear interpolation; even reflection below the first r sample,
    /// clamped outside the grid.
    pub fn sample(&self, r: f64, s: f64) -> f64 {
        let g = &self.grid;
        let x = (r.abs() / g.dr() - 0.5).clamp(0.0, (g.nr - 1) as f64);
        let y = (s / g.ds()).clamp(0.0, (g.ns - 1) as f64);
        let i = (x.floor() as usize).min(g.nr - 2);
        let j = (y.floor() as usize).min(g.ns - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let v00 = self.get(i, j);
        let v10 = self.get(i + 1, j);
        let v01 = self.get(i, j + 1);
        let v11 = self.get(i + 1, j + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }

    /// Bicubic Lagrange interpolation. In r the stencil reflects evenly
    /// through the axis; in s and at the far edges it shifts inwards.
    pub fn sample_cubic(&self, r: f64, s: f64) -> f64 {
        let g = &self.grid;
        let x = r.abs() / g.dr() - 0.5;
        let y = s / g.ds();
        let i0 = (x.floor() as i64 - 1).min(g.nr as i64 - 4);
        let j0 = (y.floor() as i64 - 1).clamp(0, g.ns as i64 - 4);
        let wx = lagrange4(x - i0 as f64);
        let wy = lagrange4(y - j0 as f64);
        let mut total = 0.0;
        for (b, wyb) in wy.iter().enumerate() {
            let j = (j0 + b as i64) as usize;
            let mut row = 0.0;
            for (a, wxa) in wx.iter().enumerate() {
                let k = i0 + a as i64;
                let i = if k < 0 { (-k - 1) as usize } else { k as usize };
                row += wxa * self.get(i, j);
            }
            total += wyb * row;
        }
        total
    }

    /// Nearest sample to `(r, s)`.
    pub fn nearest(&self, r: f64, s: f64) -> (usize, usize) {
        let g = &self.grid;
        let i = ((r / g.dr() - 0.5).round().max(0.0) as usize).min(g.nr - 1);
        let j = ((s / g.ds()).round().max(0.0) as usize).min(g.ns - 1);
        (i, j)
    }
}

/// Weights of the cubic through nodes 0, 1, 2, 3 evaluated at `t`.
fn lagrange4(t: f64) -> [f64; 4] {
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}
