//! Competition constants and the strip Fourier machinery.
//!
//! The asymmetry of the competition matrix enters the asymptotics through a
//! single number, the cycle product
//!
//! ```text
//! λ = (a_k1/a_1k) · Π_{j=2..k} a_{(j-1)j}/a_{j(j-1)},     α = log λ / 2π.
//! ```
//!
//! A segregated k-species state combines into one signed density
//! `𝒰 = w_i u_i` (locally, with the dominant species i), whose lift to the
//! strip is harmonic with the multiplicative period `v(x+2π, y) = λ v(x, y)`.
//! Removing the lift factor, `w = e^{-αx} v` is 2π-periodic and expands as
//!
//! ```text
//! w(x,y) = Σ_k [a_k cos(kx + αy) + b_k sin(kx + αy)] e^{-ky},
//! ```
//!
//! with integer k of both signs; modes k ≥ 0 decay toward the origin
//! ("nice"), modes k < 0 grow ("bad") and are excluded by finite energy.
//! This module builds such fields synthetically, recovers the coefficients
//! from sampled data, and evaluates the explicit constants, including the
//! vanishing order `ν = h/2 + 2α²/h` of an h-fold multiple point.

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, StripGrid};
use crate::solver::{CompetitionMatrix, SystemState};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Cycle product of competition ratios around the species ring; 1 for a
/// symmetric matrix.
pub fn lambda_of(a: &CompetitionMatrix) -> f64 {
    let k = a.k;
    let mut lambda = a.get(k - 1, 0) / a.get(0, k - 1);
    for j in 1..k {
        lambda *= a.get(j - 1, j) / a.get(j, j - 1);
    }
    lambda
}

/// Spiral twist rate `α = log λ / 2π`.
pub fn alpha_of(lambda: f64) -> f64 {
    lambda.ln() / (2.0 * PI)
}

pub fn alpha_of_matrix(a: &CompetitionMatrix) -> f64 {
    alpha_of(lambda_of(a))
}

/// Vanishing order at an h-fold multiple point.
pub fn predicted_nu(h: usize, alpha: f64) -> f64 {
    h as f64 / 2.0 + 2.0 * alpha * alpha / h as f64
}

/// Signed weights combining the species into one density: `w_1 = 1`,
/// `w_i = (-1)^{i-1} Π_{j=2..i} a_{(j-1)j}/a_{j(j-1)}`.
pub fn weights_u(a: &CompetitionMatrix) -> Vec<f64> {
    let mut w = Vec::with_capacity(a.k);
    w.push(1.0);
    for j in 1..a.k {
        let prev = w[j - 1];
        w.push(-prev * a.get(j - 1, j) / a.get(j, j - 1));
    }
    w
}

/// The derived constants for one experiment.
#[derive(Debug, Clone)]
pub struct SpectralConstants {
    pub h: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub nu: f64,
    pub weights: Vec<f64>,
    /// Odd h needs the angle doubled before the density lifts to a
    /// single-valued function; `n_star` is the dominant mode index on the
    /// (possibly doubled) strip.
    pub doubled: bool,
    pub n_star: usize,
}

pub fn spectral_constants(h: usize, a: &CompetitionMatrix) -> Result<SpectralConstants> {
    if h < 3 {
        return Err(Error::InvalidMatrix(format!("h = {h}, need >= 3")));
    }
    let lambda = lambda_of(a);
    let alpha = alpha_of(lambda);
    Ok(SpectralConstants {
        h,
        lambda,
        alpha,
        nu: predicted_nu(h, alpha),
        weights: weights_u(a),
        doubled: h % 2 == 1,
        n_star: if h % 2 == 0 { h / 2 } else { h },
    })
}

/// `𝒰` assembled from a state by the max rule: at each node the dominant
/// species i contributes `w_i u_i`; nodes where every species is below
/// `delta` are set to zero.
#[derive(Debug, Clone)]
pub struct WeightedDensity {
    pub field: Field,
    /// Nodes where the two largest species both exceeded `delta`: genuine
    /// overlap zones where the max rule had to break a tie.
    pub ambiguous: usize,
}

pub fn build_u(state: &SystemState, weights: &[f64], delta: f64) -> Result<WeightedDensity> {
    let k = state.k();
    if weights.len() != k {
        return Err(Error::InvalidMatrix(format!(
            "{} weights for {} species",
            weights.len(),
            k
        )));
    }
    let grid = state.grid();
    let mut field = Field::zeros(grid, FieldKind::Signed);
    let mut ambiguous = 0usize;
    for idx in 0..grid.n_nodes() {
        let (mut best, mut second, mut arg) = (0.0f64, 0.0f64, 0usize);
        for i in 0..k {
            let v = state.fields[i].values[idx];
            if v > best {
                second = best;
                best = v;
                arg = i;
            } else if v > second {
                second = v;
            }
        }
        if best > delta {
            field.values[idx] = weights[arg] * best;
            if second > delta {
                ambiguous += 1;
            }
        }
    }
    Ok(WeightedDensity { field, ambiguous })
}

/// One Fourier mode of the periodic part: index, cosine and sine amplitude.
pub type Mode = (i32, f64, f64);

/// Evaluate the lifted harmonic `v = Σ e^{αx} [a cos(kx+αy) + b sin(kx+αy)] e^{-ky}`
/// at a point of the half-plane (x unrestricted).
pub fn eval_harmonic(alpha: f64, modes: &[Mode], x: f64, y: f64) -> f64 {
    let lift = (alpha * x).exp();
    let mut v = 0.0;
    for &(k, a, b) in modes {
        let phase = k as f64 * x + alpha * y;
        v += (a * phase.cos() + b * phase.sin()) * (-(k as f64) * y).exp();
    }
    lift * v
}

/// Sample the lifted harmonic on the grid. Not 2π-periodic unless α = 0:
/// the seam carries the multiplicative factor λ = e^{2πα}.
pub fn synth_harmonic(grid: StripGrid, alpha: f64, modes: &[Mode]) -> Field {
    Field::from_fn(grid, FieldKind::Signed, |x, y| eval_harmonic(alpha, modes, x, y))
}

/// Remove the lift: `w = e^{-αx} v`, genuinely 2π-periodic for valid input.
pub fn reduce_lift(v: &Field, alpha: f64) -> Field {
    let grid = v.grid;
    let mut w = v.clone();
    w.kind = FieldKind::Signed;
    for j in 0..grid.n_y {
        for i in 0..grid.n_theta {
            let val = w.at(i, j) * (-alpha * grid.theta(i)).exp();
            w.set(i, j, val);
        }
    }
    w
}

/// Per-row Fourier coefficients of a periodic strip function, with the
/// recovered mode amplitudes after fitting the y-evolution.
pub struct FourierTable {
    pub alpha: f64,
    pub ys: Vec<f64>,
    nt: usize,
    /// Row-major complex coefficients in FFT index order (1/n normalized):
    /// index m holds wave number m for m ≤ n/2, else m − n.
    w: Vec<Vec<Complex64>>,
    /// Recovered (k, a_k, b_k), ascending in k over |k| ≤ n_theta/2.
    coeffs: Vec<Mode>,
    /// Worst relative misfit of the two-exponential model across modes.
    pub fit_residual: f64,
}

impl FourierTable {
    pub fn w_row(&self, j: usize) -> &[Complex64] {
        &self.w[j]
    }

    /// Complex coefficient of wave number k (signed) on row j.
    pub fn w_k(&self, j: usize, k: i32) -> Complex64 {
        let n = self.nt as i32;
        let m = if k < 0 { k + n } else { k };
        self.w[j][m as usize]
    }

    pub fn coeffs(&self) -> &[Mode] {
        &self.coeffs
    }

    pub fn coeff(&self, k: i32) -> (f64, f64) {
        match self.coeffs.binary_search_by_key(&k, |m| m.0) {
            Ok(pos) => (self.coeffs[pos].1, self.coeffs[pos].2),
            Err(_) => (0.0, 0.0),
        }
    }

    /// Parseval gap on row j: `|Σ_k |W_k|² − mean(w²)|` relative to the row
    /// energy (0 for an exact DFT).
    pub fn parseval_gap(&self, j: usize, row: &[f64]) -> f64 {
        let lhs: f64 = self.w[j].iter().map(|c| c.norm_sqr()).sum();
        let rhs = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
        let scale = rhs.max(1e-300);
        ((lhs - rhs) / scale).abs()
    }
}

/// Solve the 2x2 Hermitian least-squares system for one mode:
/// `W(y_j) ≈ p φ1(y_j) + q φ2(y_j)`.
fn fit_two_exponentials(
    ys: &[f64],
    w: &[Complex64],
    phi1: impl Fn(f64) -> Complex64,
    phi2: impl Fn(f64) -> Complex64,
) -> (Complex64, Complex64) {
    let (mut g11, mut g22) = (0.0f64, 0.0f64);
    let mut g12 = Complex64::new(0.0, 0.0);
    let mut r1 = Complex64::new(0.0, 0.0);
    let mut r2 = Complex64::new(0.0, 0.0);
    for (j, &y) in ys.iter().enumerate() {
        let f1 = phi1(y);
        let f2 = phi2(y);
        g11 += f1.norm_sqr();
        g22 += f2.norm_sqr();
        g12 += f1.conj() * f2;
        r1 += f1.conj() * w[j];
        r2 += f2.conj() * w[j];
    }
    let det = g11 * g22 - g12.norm_sqr();
    if det.abs() <= 1e-14 * (g11 * g22).max(1e-300) {
        // basis degenerate (e.g. k = 0 with α = 0): single-parameter fit
        let p = if g11 > 0.0 { r1 / g11 } else { Complex64::new(0.0, 0.0) };
        return (p, Complex64::new(0.0, 0.0));
    }
    let p = (r1 * g22 - g12 * r2) / det;
    let q = (g11 * r2 - g12.conj() * r1) / det;
    (p, q)
}

/// Per-row DFT of a periodic strip function plus recovery of the mode
/// amplitudes `(a_k, b_k)` from the y-evolution
/// `W_m(y) = P e^{(-m+iα)y} + Q e^{(m-iα)y}`.
///
/// The input must already be the periodic part `w = e^{-αx} v`; rows whose
/// seam jump is far out of line with their interior increments indicate an
/// unreduced (multiplicatively periodic) input and are rejected.
pub fn fourier_rows(w: &Field, alpha: f64) -> Result<FourierTable> {
    let grid = w.grid;
    let nt = grid.n_theta;
    let ys: Vec<f64> = (0..grid.n_y).map(|j| grid.y(j)).collect();

    for j in 0..grid.n_y {
        let row = w.row(j);
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= 0.0 {
            continue;
        }
        let mut interior = 0.0f64;
        for i in 0..nt - 1 {
            interior = interior.max((row[i + 1] - row[i]).abs());
        }
        let seam = (row[0] - row[nt - 1]).abs();
        if seam > 8.0 * interior.max(1e-12 * scale) {
            return Err(Error::NonPeriodicRow {
                y: grid.y(j),
                ratio: seam / interior.max(1e-300),
            });
        }
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nt);
    let mut rows = Vec::with_capacity(grid.n_y);
    let inv_n = 1.0 / nt as f64;
    for j in 0..grid.n_y {
        let mut buf: Vec<Complex64> = w.row(j).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        for c in &mut buf {
            *c *= inv_n;
        }
        rows.push(buf);
    }

    let y_max = grid.y_max;
    let mut coeffs: Vec<Mode> = Vec::new();
    let mut fit_residual = 0.0f64;

    // m = 0: W_0(y) is real and equals a_0 cos(αy) + b_0 sin(αy)
    {
        let w0: Vec<f64> = rows.iter().map(|r| r[0].re).collect();
        let (mut caa, mut cab, mut cbb, mut ra, mut rb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, &y) in ys.iter().enumerate() {
            let (c, s) = ((alpha * y).cos(), (alpha * y).sin());
            caa += c * c;
            cab += c * s;
            cbb += s * s;
            ra += c * w0[j];
            rb += s * w0[j];
        }
        let det = caa * cbb - cab * cab;
        let (a0, b0) = if det.abs() <= 1e-14 * caa.max(1e-300) {
            // α = 0 leaves the sine direction unidentifiable
            (ra / caa.max(1e-300), 0.0)
        } else {
            ((ra * cbb - cab * rb) / det, (caa * rb - cab * ra) / det)
        };
        coeffs.push((0, a0, b0));
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        for (j, &y) in ys.iter().enumerate() {
            let model = a0 * (alpha * y).cos() + b0 * (alpha * y).sin();
            res = res.max((w0[j] - model).abs());
            scale = scale.max(w0[j].abs());
        }
        if scale > 0.0 {
            fit_residual = fit_residual.max(res / scale);
        }
    }

    for m in 1..=nt / 2 {
        let mf = m as f64;
        let wm: Vec<Complex64> = rows.iter().map(|r| r[m]).collect();
        // growing basis evaluated relative to y_max to stay bounded
        let (p, q_scaled) = fit_two_exponentials(
            &ys,
            &wm,
            |y| (Complex64::new(-mf, alpha) * y).exp(),
            |y| (Complex64::new(mf, -alpha) * (y - y_max)).exp(),
        );
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        for (j, &y) in ys.iter().enumerate() {
            let model = p * (Complex64::new(-mf, alpha) * y).exp()
                + q_scaled * (Complex64::new(mf, -alpha) * (y - y_max)).exp();
            res = res.max((wm[j] - model).norm());
            scale = scale.max(wm[j].norm());
        }
        if scale > 1e-300 {
            fit_residual = fit_residual.max(res / scale);
        }
        // W_m(y) = P e^{(-m+iα)y} + Q e^{(m-iα)y} with
        // P = (a_m - i b_m)/2 and Q = (a_{-m} + i b_{-m})/2
        coeffs.push((m as i32, 2.0 * p.re, -2.0 * p.im));
        let q = q_scaled * (Complex64::new(-mf, alpha) * y_max).exp();
        // at m = n/2 the wave numbers ±n/2 alias; the growing part is still
        // reported under -n/2 so bad energy is not silently dropped
        coeffs.push((-(m as i32), 2.0 * q.re, 2.0 * q.im));
    }
    coeffs.sort_by_key(|m| m.0);

    Ok(FourierTable { alpha, ys, nt, w: rows, coeffs, fit_residual })
}

/// Energy split into decaying (k ≥ 0) and growing (k < 0) modes.
#[derive(Debug, Clone, Copy)]
pub struct NiceBadSplit {
    pub e_nice: f64,
    pub e_bad: f64,
    /// Smallest wave number whose energy exceeds the threshold.
    pub k_bar: Option<i32>,
}

/// Split mode energies `a_k² + b_k²`; the threshold is relative to the
/// largest mode energy (1e-12 flags amplitudes above 1e-6 relative).
pub fn nice_bad_split(table: &FourierTable, threshold_rel: f64) -> NiceBadSplit {
    let energies: Vec<(i32, f64)> = table
        .coeffs()
        .iter()
        .map(|&(k, a, b)| (k, a * a + b * b))
        .collect();
    let max_e = energies.iter().fold(0.0f64, |m, &(_, e)| m.max(e));
    let threshold = threshold_rel * max_e;
    let (mut e_nice, mut e_bad) = (0.0, 0.0);
    let mut k_bar = None;
    for &(k, e) in &energies {
        if k >= 0 {
            e_nice += e;
        } else {
            e_bad += e;
        }
        if e > threshold && max_e > 0.0 {
            k_bar = Some(k_bar.map_or(k, |cur: i32| cur.min(k)));
        }
    }
    NiceBadSplit { e_nice, e_bad, k_bar }
}

/// Sample the model expansion `𝒰 = r^ν cos(hθ/2 − α log r)` on the strip
/// (`r = e^{-y}`, so `𝒰 = e^{-νy} cos(hθ/2 + αy)`).
pub fn sample_expansion(grid: StripGrid, h: usize, alpha: f64, nu: f64) -> Field {
    let hh = h as f64 / 2.0;
    Field::from_fn(grid, FieldKind::Signed, |theta, y| {
        (-nu * y).exp() * (hh * theta + alpha * y).cos()
    })
}

/// Build the exact segregated state carried by the expansion: species
/// `i = band mod h` owns the phase band `hθ/2 + αy ∈ (bπ - π/2, bπ + π/2)`
/// and there takes the value `|𝒰| / |w_i|`.
pub fn expansion_state(grid: StripGrid, h: usize, alpha: f64, nu: f64, weights: &[f64]) -> SystemState {
    assert_eq!(weights.len(), h, "one weight per species");
    let hh = h as f64 / 2.0;
    let mut fields: Vec<Field> =
        (0..h).map(|s| Field::zeros(grid, FieldKind::Species(s))).collect();
    for j in 0..grid.n_y {
        let y = grid.y(j);
        for i in 0..grid.n_theta {
            let phase = hh * grid.theta(i) + alpha * y;
            let band = (phase / PI + 0.5).floor() as i64;
            let species = band.rem_euclid(h as i64) as usize;
            let u = ((-nu * y).exp() * phase.cos()).abs() / weights[species].abs();
            fields[species].set(i, j, u);
        }
    }
    SystemState {
        beta: f64::INFINITY,
        fields,
        defect: 0.0,
        sweeps: 0,
        converged: true,
        history: Vec::new(),
    }
}
