//! Log-polar strip grid over the punctured unit disk.
//!
//! The map `(θ, y) ↦ (e^{-y} cos θ, e^{-y} sin θ)` sends the periodic strip
//! `[0, 2π) × [0, y_max]` onto the annulus `e^{-y_max} ≤ r ≤ 1`. It is
//! conformal, so the disk Laplacian turns into `e^{2y} Δ_strip`: uniform
//! strip cells resolve the neighborhood of the origin exponentially well,
//! which is where all the free-boundary action is.

use crate::error::{Error, Result};

/// Uniform grid on the strip: `n_theta` columns (periodic), `n_y` rows
/// (row 0 at `y = 0`, the unit circle; last row at `y = y_max`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripGrid {
    pub n_theta: usize,
    pub n_y: usize,
    pub y_max: f64,
}

impl StripGrid {
    pub fn new(n_theta: usize, n_y: usize, y_max: f64) -> Result<Self> {
        if n_theta < 16 || n_theta % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_theta = {n_theta}, need an even number >= 16"
            )));
        }
        if n_y < 2 {
            return Err(Error::InvalidGrid(format!("n_y = {n_y}, need >= 2")));
        }
        if !(y_max > 0.0) || !y_max.is_finite() {
            return Err(Error::InvalidGrid(format!("y_max = {y_max}, need finite > 0")));
        }
        Ok(StripGrid { n_theta, n_y, y_max })
    }

    pub fn d_theta(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_theta as f64
    }

    pub fn dy(&self) -> f64 {
        self.y_max / (self.n_y - 1) as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.d_theta()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    /// Truncation radius: the disk of radius `r_min` around the origin is not
    /// represented on the grid.
    pub fn r_min(&self) -> f64 {
        (-self.y_max).exp()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_y
    }

    /// Row-major node index (row = y level).
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n_theta + i
    }

    /// Strip point to disk point.
    pub fn to_cartesian(&self, theta: f64, y: f64) -> (f64, f64) {
        let r = (-y).exp();
        (r * theta.cos(), r * theta.sin())
    }

    /// Disk point to strip point, `θ ∈ [0, 2π)`. The origin (and anything
    /// outside the closed disk) has no strip image.
    pub fn from_cartesian(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let r = x.hypot(y);
        if r == 0.0 || r > 1.0 + 1e-9 {
            return Err(Error::OutsideDisk { x, y });
        }
        let mut theta = y.atan2(x);
        if theta < 0.0 {
            theta += 2.0 * std::f64::consts::PI;
        }
        if theta >= 2.0 * std::f64::consts::PI {
            theta = 0.0;
        }
        Ok((theta, -r.ln()))
    }
}

/// What a scalar grid function represents; only affects exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Nonnegative density of one species.
    Species(usize),
    /// Signed combination of densities (pair fields, weighted sums).
    Signed,
    Diagnostic,
}

/// Scalar function sampled on a [`StripGrid`], stored row-major by y level.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: StripGrid,
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: StripGrid, kind: FieldKind) -> Self {
        Field { grid, kind, values: vec![0.0; grid.n_nodes()] }
    }

    pub fn from_fn(grid: StripGrid, kind: FieldKind, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for j in 0..grid.n_y {
            let y = grid.y(j);
            for i in 0..grid.n_theta {
                values.push(f(grid.theta(i), y));
            }
        }
        Field { grid, kind, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.idx(i, j);
        self.values[idx] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.grid.n_theta..(j + 1) * self.grid.n_theta]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Bilinear interpolation in strip coordinates. `theta` is wrapped;
    /// `y` outside `[0, y_max]` is clamped to the nearest row.
    pub fn sample_bilinear(&self, theta: f64, y: f64) -> f64 {
        let g = &self.grid;
        let two_pi = 2.0 * std::f64::consts::PI;
        let t = theta.rem_euclid(two_pi) / g.d_theta();
        let i0 = (t.floor() as usize) % g.n_theta;
        let i1 = (i0 + 1) % g.n_theta;
        let ft = t - t.floor();
        let s = (y / g.dy()).clamp(0.0, (g.n_y - 1) as f64);
        let j0 = s.floor() as usize;
        let j1 = (j0 + 1).min(g.n_y - 1);
        let fs = s - j0 as f64;
        let v00 = self.at(i0, j0);
        let v10 = self.at(i1, j0);
        let v01 = self.at(i0, j1);
        let v11 = self.at(i1, j1);
        (1.0 - fs) * ((1.0 - ft) * v00 + ft * v10) + fs * ((1.0 - ft) * v01 + ft * v11)
    }
}

/// Factor `e^{-2y}` per node: a disk-side reaction coefficient `c(x)` enters
/// the strip equation as `e^{-2y} c`, since `Δ_disk = e^{2y} Δ_strip`.
pub fn disk_laplacian_rhs_factor(grid: StripGrid) -> Field {
    Field::from_fn(grid, FieldKind::Diagnostic, |_, y| (-2.0 * y).exp())
}

/// Five-point strip Laplacian `Δ_strip v`, periodic in θ. Boundary rows are
/// set to zero (no one-sided stencil there).
pub fn strip_laplacian(v: &Field) -> Field {
    let g = v.grid;
    let (idt2, idy2) = (1.0 / (g.d_theta() * g.d_theta()), 1.0 / (g.dy() * g.dy()));
    let mut out = Field::zeros(g, FieldKind::Diagnostic);
    for j in 1..g.n_y - 1 {
        for i in 0..g.n_theta {
            let e = v.at((i + 1) % g.n_theta, j);
            let w = v.at((i + g.n_theta - 1) % g.n_theta, j);
            let n = v.at(i, j + 1);
            let s = v.at(i, j - 1);
            let c = v.at(i, j);
            out.set(i, j, (e + w - 2.0 * c) * idt2 + (n + s - 2.0 * c) * idy2);
        }
    }
    out
}
