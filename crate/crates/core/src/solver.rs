//! Screened linear solves and the nonlinear competition relaxation.
//!
//! Everything happens on the strip. One species with frozen competitors
//! satisfies a screened equation
//!
//! ```text
//! -Δ_strip u + e^{-2y} c u = 0,   u(·, 0) = trace,   u(·, y_max) = 0,
//! ```
//!
//! with `c = β Σ_{j≠i} a_ij u_j ≥ 0`. The discrete operator (five-point
//! stencil, periodic in θ) is symmetric positive definite and an M-matrix,
//! so solutions inherit the discrete maximum principle: nonnegative data
//! give nonnegative solutions, and growing the screening coefficient can
//! only push values down.
//!
//! The linear solves run conjugate gradients preconditioned by one V-cycle
//! of a θ-semicoarsened multigrid whose smoother is red-black Gauss-Seidel
//! over whole y-lines (each line solved exactly by a tridiagonal sweep).
//! Line relaxation is exact in the direction that is never coarsened, and a
//! large screening term only adds diagonal dominance, so the cycle works
//! uniformly well from the harmonic case `c = 0` up to `β = 1e7`, where the
//! screened region is essentially diagonal.
//!
//! The nonlinear system is relaxed Gauss-Seidel style over species: each
//! sweep re-solves every species against the current competitors, warm
//! starting from the previous iterate; the inner tolerance tracks the
//! current outer defect. β-continuation walks the schedule reusing each
//! converged state as the next initial guess.

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, StripGrid};
use crate::traces::TraceSpec;

/// Inter-species competition coefficients `a_ij > 0` (diagonal unused).
#[derive(Debug, Clone)]
pub struct CompetitionMatrix {
    pub k: usize,
    a: Vec<f64>,
}

impl CompetitionMatrix {
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidMatrix(format!("k = {k}, need >= 2")));
        }
        if entries.len() != k * k {
            return Err(Error::InvalidMatrix(format!(
                "got {} entries, need {}",
                entries.len(),
                k * k
            )));
        }
        let mut a = entries;
        for i in 0..k {
            a[i * k + i] = 0.0;
            for j in 0..k {
                if i != j && !(a[i * k + j] > 0.0 && a[i * k + j].is_finite()) {
                    return Err(Error::InvalidMatrix(format!(
                        "a[{}][{}] = {}, need finite > 0",
                        i + 1,
                        j + 1,
                        a[i * k + j]
                    )));
                }
            }
        }
        Ok(CompetitionMatrix { k, a })
    }

    /// All off-diagonal couplings equal to one.
    pub fn symmetric(k: usize) -> Self {
        let mut m = CompetitionMatrix { k, a: vec![1.0; k * k] };
        for i in 0..k {
            m.a[i * k + i] = 0.0;
        }
        m
    }

    /// Cyclic bias: `a_{i,i+1} = c` (indices mod k), every other coupling 1.
    pub fn cyclic(k: usize, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidMatrix(format!("cyclic coupling c = {c}")));
        }
        let mut a = vec![1.0; k * k];
        for i in 0..k {
            a[i * k + i] = 0.0;
            a[i * k + (i + 1) % k] = c;
        }
        CompetitionMatrix::new(k, a)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.k + j]
    }

    pub fn transpose(&self) -> Self {
        let mut a = vec![0.0; self.k * self.k];
        for i in 0..self.k {
            for j in 0..self.k {
                a[j * self.k + i] = self.a[i * self.k + j];
            }
        }
        CompetitionMatrix { k: self.k, a }
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }
}

/// `out = rhs-style residual`: `-(-Δ_strip u + pot·u)` on interior nodes,
/// zero on the Dirichlet rows; the stencil reads the boundary rows of `u`.
fn stencil_residual(nt: usize, n_y: usize, idt2: f64, idy2: f64, u: &[f64], pot: &[f64], out: &mut [f64]) {
    out[..nt].fill(0.0);
    out[(n_y - 1) * nt..].fill(0.0);
    for j in 1..n_y - 1 {
        let base = j * nt;
        for i in 0..nt {
            let idx = base + i;
            let east = u[base + (i + 1) % nt];
            let west = u[base + (i + nt - 1) % nt];
            let lap = (east + west - 2.0 * u[idx]) * idt2
                + (u[idx + nt] + u[idx - nt] - 2.0 * u[idx]) * idy2;
            out[idx] = lap - pot[idx] * u[idx];
        }
    }
}

/// `out = (-Δ_strip + pot) p` on interior nodes; `p` is zero on Dirichlet rows.
fn stencil_apply(nt: usize, n_y: usize, idt2: f64, idy2: f64, p: &[f64], pot: &[f64], out: &mut [f64]) {
    for j in 1..n_y - 1 {
        let base = j * nt;
        for i in 0..nt {
            let idx = base + i;
            let east = p[base + (i + 1) % nt];
            let west = p[base + (i + nt - 1) % nt];
            let lap = (east + west - 2.0 * p[idx]) * idt2
                + (p[idx + nt] + p[idx - nt] - 2.0 * p[idx]) * idy2;
            out[idx] = pot[idx] * p[idx] - lap;
        }
    }
}

fn inf_norm_interior(nt: usize, n_y: usize, v: &[f64]) -> f64 {
    v[nt..(n_y - 1) * nt].iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot_interior(nt: usize, n_y: usize, a: &[f64], b: &[f64]) -> f64 {
    a[nt..(n_y - 1) * nt]
        .iter()
        .zip(&b[nt..(n_y - 1) * nt])
        .map(|(x, y)| x * y)
        .sum()
}

/// One multigrid level: θ resolution, its potential and scratch vectors.
struct MgLevel {
    nt: usize,
    idt2: f64,
    pot: Vec<f64>,
    b: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
}

/// θ-semicoarsened V-cycle with red-black y-line smoothing.
///
/// Only θ is coarsened (halved while even and ≥ 16 columns remain), so the
/// Dirichlet rows never move; y-lines are solved exactly inside the
/// smoother. Potentials are restricted per level with 1/4-1/2-1/4 weights
/// when a new screening field is installed.
struct MgPreconditioner {
    n_y: usize,
    idy2: f64,
    levels: Vec<MgLevel>,
    /// Thomas scratch, length `n_y`.
    diag: Vec<f64>,
    rhs: Vec<f64>,
}

impl MgPreconditioner {
    fn new(grid: StripGrid) -> Self {
        let idy2 = 1.0 / (grid.dy() * grid.dy());
        let mut levels = Vec::new();
        let mut nt = grid.n_theta;
        let mut idt2 = 1.0 / (grid.d_theta() * grid.d_theta());
        loop {
            let n = nt * grid.n_y;
            levels.push(MgLevel {
                nt,
                idt2,
                pot: vec![0.0; n],
                b: vec![0.0; n],
                z: vec![0.0; n],
                r: vec![0.0; n],
            });
            if nt / 2 < 8 || (nt / 2) % 2 != 0 {
                break;
            }
            nt /= 2;
            idt2 /= 4.0;
        }
        MgPreconditioner {
            n_y: grid.n_y,
            idy2,
            levels,
            diag: vec![0.0; grid.n_y],
            rhs: vec![0.0; grid.n_y],
        }
    }

    /// Install the screening potential for the next solves.
    fn set_potential(&mut self, pot: &[f64]) {
        self.levels[0].pot.copy_from_slice(pot);
        for l in 1..self.levels.len() {
            let (fine, coarse) = self.levels.split_at_mut(l);
            let fine = &fine[l - 1];
            let coarse = &mut coarse[0];
            restrict_theta(fine.nt, self.n_y, &fine.pot, coarse.nt, &mut coarse.pot);
        }
    }

    /// V-cycle on `levels[l]`: solve `A_l z = b` approximately, `z` from zero.
    fn vcycle(&mut self, l: usize) {
        let bottom = l + 1 == self.levels.len();
        self.levels[l].z.fill(0.0);
        if bottom {
            let sweeps = (2 * self.levels[l].nt).clamp(16, 64);
            for _ in 0..sweeps {
                self.smooth(l, [0, 1]);
            }
            return;
        }
        self.smooth(l, [0, 1]);
        // residual and restriction
        {
            let (head, tail) = self.levels.split_at_mut(l + 1);
            let cur = &mut head[l];
            let next = &mut tail[0];
            stencil_apply(cur.nt, self.n_y, cur.idt2, self.idy2, &cur.z, &cur.pot, &mut cur.r);
            for j in 1..self.n_y - 1 {
                for i in 0..cur.nt {
                    let idx = j * cur.nt + i;
                    cur.r[idx] = cur.b[idx] - cur.r[idx];
                }
            }
            cur.r[..cur.nt].fill(0.0);
            cur.r[(self.n_y - 1) * cur.nt..].fill(0.0);
            restrict_theta(cur.nt, self.n_y, &cur.r, next.nt, &mut next.b);
        }
        self.vcycle(l + 1);
        {
            let (head, tail) = self.levels.split_at_mut(l + 1);
            let cur = &mut head[l];
            let next = &tail[0];
            prolong_theta_add(next.nt, self.n_y, &next.z, cur.nt, &mut cur.z);
        }
        self.smooth(l, [1, 0]);
    }

    fn smooth(&mut self, level: usize, order: [usize; 2]) {
        for parity in order {
            self.line_pass(level, parity);
        }
    }

    /// Apply `z = M^{-1} r` (one V-cycle). `z` is zero on Dirichlet rows.
    fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        self.levels[0].b.copy_from_slice(r);
        self.vcycle(0);
        z.copy_from_slice(&self.levels[0].z);
    }

    /// One red-black pass over y-lines of the given parity: each column is
    /// solved exactly by a tridiagonal sweep against the current neighbors.
    fn line_pass(&mut self, level: usize, parity: usize) {
        let n_y = self.n_y;
        let idy2 = self.idy2;
        let lvl = &mut self.levels[level];
        let nt = lvl.nt;
        let idt2 = lvl.idt2;
        let mut i = parity;
        while i < nt {
            let east = (i + 1) % nt;
            let west = (i + nt - 1) % nt;
            for j in 1..n_y - 1 {
                let row = j * nt;
                self.diag[j] = 2.0 * idt2 + 2.0 * idy2 + lvl.pot[row + i];
                self.rhs[j] = lvl.b[row + i] + idt2 * (lvl.z[row + east] + lvl.z[row + west]);
            }
            // Thomas forward sweep: sub/super diagonals are both -idy2
            let mut inv = 1.0 / self.diag[1];
            self.diag[1] = inv;
            self.rhs[1] *= inv;
            for j in 2..n_y - 1 {
                inv = 1.0 / (self.diag[j] - idy2 * idy2 * self.diag[j - 1]);
                self.rhs[j] = (self.rhs[j] + idy2 * self.rhs[j - 1]) * inv;
                self.diag[j] = inv;
            }
            // back substitution straight into the correction
            let mut next = self.rhs[n_y - 2];
            lvl.z[(n_y - 2) * nt + i] = next;
            for j in (1..n_y - 2).rev() {
                next = self.rhs[j] + self.diag[j] * idy2 * next;
                lvl.z[j * nt + i] = next;
            }
            lvl.z[i] = 0.0;
            lvl.z[(n_y - 1) * nt + i] = 0.0;
            i += 2;
        }
    }
}

/// Full-weighting restriction in θ only (1/4, 1/2, 1/4), rows untouched.
fn restrict_theta(nt_f: usize, n_y: usize, fine: &[f64], nt_c: usize, coarse: &mut [f64]) {
    debug_assert_eq!(nt_f, 2 * nt_c);
    for j in 0..n_y {
        let fr = &fine[j * nt_f..(j + 1) * nt_f];
        let cr = &mut coarse[j * nt_c..(j + 1) * nt_c];
        for ic in 0..nt_c {
            let i = 2 * ic;
            let west = fr[(i + nt_f - 1) % nt_f];
            let east = fr[i + 1];
            cr[ic] = 0.25 * west + 0.5 * fr[i] + 0.25 * east;
        }
    }
}

/// Linear interpolation in θ, added into the fine vector.
fn prolong_theta_add(nt_c: usize, n_y: usize, coarse: &[f64], nt_f: usize, fine: &mut [f64]) {
    debug_assert_eq!(nt_f, 2 * nt_c);
    for j in 1..n_y - 1 {
        let cr = &coarse[j * nt_c..(j + 1) * nt_c];
        let fr = &mut fine[j * nt_f..(j + 1) * nt_f];
        for ic in 0..nt_c {
            fr[2 * ic] += cr[ic];
            fr[2 * ic + 1] += 0.5 * (cr[ic] + cr[(ic + 1) % nt_c]);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Reusable solver context for one grid: multigrid hierarchy, stencil
/// constants, the `e^{-2y}` row factors and CG scratch vectors.
pub struct StripSolver {
    pub grid: StripGrid,
    mg: MgPreconditioner,
    idt2: f64,
    idy2: f64,
    /// `e^{-2y}` per row.
    row_factor: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    pub max_inner: usize,
}

impl StripSolver {
    pub fn new(grid: StripGrid) -> Result<Self> {
        if grid.n_y < 4 {
            return Err(Error::InvalidGrid(format!(
                "n_y = {}, need >= 4 to solve on the strip",
                grid.n_y
            )));
        }
        let n = grid.n_nodes();
        Ok(StripSolver {
            grid,
            mg: MgPreconditioner::new(grid),
            idt2: 1.0 / (grid.d_theta() * grid.d_theta()),
            idy2: 1.0 / (grid.dy() * grid.dy()),
            row_factor: (0..grid.n_y).map(|j| (-2.0 * grid.y(j)).exp()).collect(),
            r: vec![0.0; n],
            z: vec![0.0; n],
            p: vec![0.0; n],
            q: vec![0.0; n],
            max_inner: 10_000,
        })
    }

    /// Preconditioned CG on the screened problem, warm starting from the
    /// values already in `u`. `pot` carries the `e^{-2y}` factor. Stops at
    /// `‖r‖_∞ ≤ tol_abs` (the caller picks the scale).
    pub fn solve(&mut self, u: &mut [f64], pot: &[f64], tol_abs: f64) -> Result<SolveStats> {
        let (nt, n_y) = (self.grid.n_theta, self.grid.n_y);
        let (idt2, idy2) = (self.idt2, self.idy2);
        stencil_residual(nt, n_y, idt2, idy2, u, pot, &mut self.r);
        let mut res = inf_norm_interior(nt, n_y, &self.r);
        if res <= tol_abs {
            return Ok(SolveStats { iterations: 0, residual: res });
        }
        self.mg.set_potential(pot);
        self.mg.apply(&self.r, &mut self.z);
        self.p.copy_from_slice(&self.z);
        let mut rz = dot_interior(nt, n_y, &self.r, &self.z);
        let (lo, hi) = (nt, (n_y - 1) * nt);
        for it in 1..=self.max_inner {
            stencil_apply(nt, n_y, idt2, idy2, &self.p, pot, &mut self.q);
            let pq = dot_interior(nt, n_y, &self.p, &self.q);
            if !(pq > 0.0) {
                return Err(Error::LinearSolveStalled {
                    max_iter: it,
                    residual: res,
                    target: tol_abs,
                });
            }
            let alpha = rz / pq;
            for idx in lo..hi {
                u[idx] += alpha * self.p[idx];
            }
            if it % 32 == 0 {
                // refresh the residual to shake off accumulated drift
                stencil_residual(nt, n_y, idt2, idy2, u, pot, &mut self.r);
            } else {
                for idx in lo..hi {
                    self.r[idx] -= alpha * self.q[idx];
                }
            }
            res = inf_norm_interior(nt, n_y, &self.r);
            if res <= tol_abs {
                return Ok(SolveStats { iterations: it, residual: res });
            }
            self.mg.apply(&self.r, &mut self.z);
            let rz_next = dot_interior(nt, n_y, &self.r, &self.z);
            for idx in lo..hi {
                self.p[idx] = self.z[idx] + (rz_next / rz) * self.p[idx];
            }
            rz = rz_next;
        }
        Err(Error::LinearSolveStalled { max_iter: self.max_inner, residual: res, target: tol_abs })
    }

    /// Node potential `e^{-2y} c` from a disk-side coefficient field.
    pub fn node_potential(&self, c: &Field) -> Vec<f64> {
        let nt = self.grid.n_theta;
        let mut pot = vec![0.0; self.grid.n_nodes()];
        for j in 0..self.grid.n_y {
            let f = self.row_factor[j];
            for i in 0..nt {
                pot[j * nt + i] = f * c.values[j * nt + i];
            }
        }
        pot
    }

    pub fn row_factor(&self, j: usize) -> f64 {
        self.row_factor[j]
    }

    fn defect_of(&mut self, u: &[f64], pot: &[f64]) -> f64 {
        let (nt, n_y) = (self.grid.n_theta, self.grid.n_y);
        stencil_residual(nt, n_y, self.idt2, self.idy2, u, pot, &mut self.r);
        inf_norm_interior(nt, n_y, &self.r)
    }
}

/// Solve `-Δ_strip u + e^{-2y} c u = 0` with `u = trace` on the boundary row
/// and `u = 0` on the truncation row, to relative residual `1e-10`.
///
/// `c` is the disk-side screening coefficient and must be nonnegative; the
/// trace may be signed.
pub fn solve_screened(grid: StripGrid, c: &Field, trace: &[f64]) -> Result<Field> {
    if trace.len() != grid.n_theta {
        return Err(Error::InvalidGrid(format!(
            "trace has {} values, grid row needs {}",
            trace.len(),
            grid.n_theta
        )));
    }
    if c.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidMatrix("screening coefficient must be >= 0".into()));
    }
    let mut solver = StripSolver::new(grid)?;
    let pot = solver.node_potential(c);
    let mut field = Field::zeros(grid, FieldKind::Species(0));
    field.values[..grid.n_theta].copy_from_slice(trace);
    let r0 = solver.defect_of(&field.values, &pot);
    if r0 > 0.0 {
        solver.solve(&mut field.values, &pot, 1e-10 * r0)?;
    }
    Ok(field)
}

/// Harmonic extension of the trace: `solve_screened` with `c ≡ 0`.
pub fn harmonic_extension(grid: StripGrid, trace: &[f64]) -> Result<Field> {
    solve_screened(grid, &Field::zeros(grid, FieldKind::Diagnostic), trace)
}

/// State of the coupled system at one β.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub beta: f64,
    pub fields: Vec<Field>,
    /// Max-norm defect of the discrete system at the returned state.
    pub defect: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Defect after each sweep, for diagnostics.
    pub history: Vec<f64>,
}

impl SystemState {
    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn grid(&self) -> StripGrid {
        self.fields[0].grid
    }

    /// Zero interior, boundary rows filled from the sampled traces, scaled
    /// so the largest trace value is 1.
    pub fn from_traces(grid: StripGrid, spec: &TraceSpec) -> Self {
        let rows = spec.sample(grid);
        let scale = rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        let fields = rows
            .into_iter()
            .enumerate()
            .map(|(s, row)| {
                let mut f = Field::zeros(grid, FieldKind::Species(s));
                for (i, v) in row.into_iter().enumerate() {
                    f.values[i] = v * scale;
                }
                f
            })
            .collect();
        SystemState {
            beta: 0.0,
            fields,
            defect: f64::INFINITY,
            sweeps: 0,
            converged: false,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RelaxOptions {
    /// Target max-norm defect of the coupled discrete system.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Floor for the adaptive inner (linear) tolerance.
    pub inner_floor: f64,
    /// Under-relaxation of the species updates (1 = plain Gauss-Seidel).
    pub damping: f64,
    /// Print sweep progress to stderr.
    pub verbose: bool,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            outer_tol: 1e-8,
            max_outer: 600,
            inner_floor: 1e-11,
            damping: 1.0,
            verbose: false,
        }
    }
}

/// `pot = e^{-2y} β Σ_{j≠i} a_ij u_j`, the screening felt by species `i`.
fn build_potential(
    solver: &StripSolver,
    fields: &[Field],
    a: &CompetitionMatrix,
    beta: f64,
    i: usize,
    pot: &mut [f64],
) {
    let grid = solver.grid;
    let nt = grid.n_theta;
    pot.fill(0.0);
    for j in 0..fields.len() {
        if j == i {
            continue;
        }
        let w = a.get(i, j);
        for (p, u) in pot.iter_mut().zip(&fields[j].values) {
            *p += w * u;
        }
    }
    for row in 0..grid.n_y {
        let f = beta * solver.row_factor(row);
        for v in &mut pot[row * nt..(row + 1) * nt] {
            *v *= f;
        }
    }
}

fn system_defect(
    solver: &mut StripSolver,
    fields: &[Field],
    a: &CompetitionMatrix,
    beta: f64,
    pot: &mut Vec<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..fields.len() {
        build_potential(solver, fields, a, beta, i, pot);
        worst = worst.max(solver.defect_of(&fields[i].values, pot));
    }
    worst
}

/// Gauss-Seidel relaxation over species at fixed β. Each species is
/// re-solved against the current competitors until the coupled defect drops
/// below `outer_tol`; if the sweep budget runs out, the best state seen is
/// returned flagged as non-converged so the caller can decide.
pub fn relax_system(
    solver: &mut StripSolver,
    state: &SystemState,
    a: &CompetitionMatrix,
    beta: f64,
    opts: RelaxOptions,
) -> Result<SystemState> {
    let k = state.k();
    if a.k != k {
        return Err(Error::InvalidMatrix(format!(
            "matrix is {}x{} but the state has {} species",
            a.k, a.k, k
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidMatrix(format!("beta = {beta}, need finite >= 0")));
    }
    let grid = solver.grid;
    let mut fields = state.fields.clone();
    let mut pot = vec![0.0; grid.n_nodes()];
    let mut history = Vec::new();
    let mut defect = system_defect(solver, &fields, a, beta, &mut pot);
    let mut best: Option<(f64, Vec<Field>, usize)> = None;
    let mut sweeps = 0;
    // Aitken state: previous sweep increment, and a cooldown after a
    // rejected extrapolation.
    let mut prev_diff: Option<Vec<Vec<f64>>> = None;
    let mut cooldown = 0usize;
    while defect > opts.outer_tol && sweeps < opts.max_outer {
        sweeps += 1;
        let inner_tol = (0.03 * defect).max(opts.inner_floor);
        let before: Vec<Vec<f64>> = fields.iter().map(|f| f.values.clone()).collect();
        for i in 0..k {
            build_potential(solver, &fields, a, beta, i, &mut pot);
            let mut values = std::mem::take(&mut fields[i].values);
            let old = (opts.damping < 1.0).then(|| values.clone());
            solver.solve(&mut values, &pot, inner_tol)?;
            if let Some(old) = old {
                let d = opts.damping;
                for (v, o) in values.iter_mut().zip(&old) {
                    *v = d * *v + (1.0 - d) * o;
                }
            }
            for v in &mut values {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            fields[i].values = values;
        }
        let diff: Vec<Vec<f64>> = fields
            .iter()
            .zip(&before)
            .map(|(f, b)| f.values.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        defect = system_defect(solver, &fields, a, beta, &mut pot);

        // The sweep map contracts linearly near the fixed point, slower and
        // slower as beta grows. Estimate the dominant contraction factor
        // from successive increments and jump ahead (vector Aitken), keeping
        // the result only if it actually lowers the defect.
        let mut extrapolated = false;
        if cooldown > 0 {
            cooldown -= 1;
        } else if let Some(prev) = &prev_diff {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for (d, p) in diff.iter().zip(prev) {
                for (x, y) in d.iter().zip(p) {
                    num += x * y;
                    den += y * y;
                }
            }
            let rho = if den > 0.0 { num / den } else { 0.0 };
            if rho > 0.3 && rho < 0.995 {
                let gain = rho / (1.0 - rho);
                let candidate: Vec<Field> = fields
                    .iter()
                    .zip(&diff)
                    .map(|(f, d)| {
                        let mut c = f.clone();
                        for (v, x) in c.values.iter_mut().zip(d) {
                            *v = (*v + gain * x).max(0.0);
                        }
                        c
                    })
                    .collect();
                let cand_defect = system_defect(solver, &candidate, a, beta, &mut pot);
                if cand_defect < defect {
                    fields = candidate;
                    defect = cand_defect;
                    extrapolated = true;
                } else {
                    cooldown = 3;
                }
            }
        }
        prev_diff = if extrapolated { None } else { Some(diff) };

        history.push(defect);
        if best.as_ref().is_none_or(|(b, _, _)| defect < *b) {
            best = Some((defect, fields.clone(), sweeps));
        }
        if opts.verbose {
            eprintln!(
                "  beta {beta:9.3e} sweep {sweeps:4} defect {defect:10.3e}{}",
                if extrapolated { "  (accelerated)" } else { "" }
            );
        }
    }
    let converged = defect <= opts.outer_tol;
    let (defect, fields, sweeps) = if converged {
        (defect, fields, sweeps)
    } else {
        best.unwrap_or((defect, fields, sweeps))
    };
    Ok(SystemState { beta, fields, defect, sweeps, converged, history })
}

/// Walk the β schedule, warm starting each stage from the previous one. The
/// initial state is the decoupled harmonic extension of the traces.
pub fn continuation_sweep(
    grid: StripGrid,
    a: &CompetitionMatrix,
    spec: &TraceSpec,
    schedule: &[f64],
    opts: RelaxOptions,
) -> Result<Vec<SystemState>> {
    if spec.k() != a.k {
        return Err(Error::InvalidMatrix(format!(
            "matrix is {}x{} but traces define {} species",
            a.k,
            a.k,
            spec.k()
        )));
    }
    for w in schedule.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidMatrix(format!(
                "beta schedule must increase strictly: {} then {}",
                w[0], w[1]
            )));
        }
    }
    if schedule.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::InvalidMatrix("beta schedule must be finite and > 0".into()));
    }
    let mut solver = StripSolver::new(grid)?;
    let mut state = relax_system(&mut solver, &SystemState::from_traces(grid, spec), a, 0.0, opts)?;
    let mut out = Vec::with_capacity(schedule.len());
    for &beta in schedule {
        if opts.verbose {
            eprintln!("continuation: beta = {beta:.3e}");
        }
        state = relax_system(&mut solver, &state, a, beta, opts)?;
        out.push(state.clone());
    }
    Ok(out)
}
