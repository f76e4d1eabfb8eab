//! Boundary traces: one nonnegative profile per species, supported on
//! disjoint arcs of the unit circle.
//!
//! The standard configuration with multiplicity `h` uses `|cos(hθ/2)|`,
//! split at its zeros `θ = (2m+1)π/h` into `h` sector traces labelled
//! counterclockwise; species 1 owns the arc centered at `θ = 0`, so its
//! trace peaks at `φ_1(0) = 1`. Any rigid rotation of all traces gives an
//! equivalent problem; this alignment is fixed once and used everywhere.

use crate::error::{Error, Result};
use crate::grid::StripGrid;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone)]
pub enum Profile {
    /// `|cos(hθ/2)|`.
    CosHalf,
    /// Periodic table `(θ, value)`, linearly interpolated.
    Table(Vec<(f64, f64)>),
}

/// Boundary data for `h` species on the circle.
#[derive(Debug, Clone)]
pub struct TraceSpec {
    pub h: usize,
    pub profile: Profile,
    /// Sector boundaries (the zeros of the summed trace), sorted, length `h`.
    zeros: Vec<f64>,
}

/// Standard sector traces for multiplicity `h`.
pub fn make_sector_traces(h: usize) -> Result<TraceSpec> {
    if h < 3 {
        return Err(Error::InvalidTrace(format!("multiplicity h = {h}, need >= 3")));
    }
    let zeros = (0..h).map(|m| (2 * m + 1) as f64 * PI / h as f64).collect();
    Ok(TraceSpec { h, profile: Profile::CosHalf, zeros })
}

impl TraceSpec {
    /// Custom profile with exactly `h` zeros (a run of adjacent zero values
    /// counts as one zero).
    pub fn from_table(h: usize, mut table: Vec<(f64, f64)>) -> Result<TraceSpec> {
        if h < 3 {
            return Err(Error::InvalidTrace(format!("multiplicity h = {h}, need >= 3")));
        }
        if table.len() < 8 {
            return Err(Error::InvalidTrace("profile table needs >= 8 points".into()));
        }
        for &(t, v) in &table {
            if !t.is_finite() || !v.is_finite() || v < 0.0 || !(0.0..TWO_PI).contains(&t) {
                return Err(Error::InvalidTrace(format!(
                    "bad table entry ({t}, {v}): need theta in [0, 2pi), value >= 0"
                )));
            }
        }
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        let max = table.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
        if max == 0.0 {
            return Err(Error::InvalidTrace("profile table is identically zero".into()));
        }
        // cluster zero-valued nodes into single zeros located at run centers
        let tol = 1e-12 * max;
        let n = table.len();
        let mut zeros = Vec::new();
        let mut k = 0;
        while k < n {
            if table[k].1 > tol {
                k += 1;
                continue;
            }
            let start = k;
            while k < n && table[k].1 <= tol {
                k += 1;
            }
            // a run wrapping around the seam joins the first run; handled below
            zeros.push((start, k - 1));
        }
        if zeros.len() >= 2 && zeros[0].0 == 0 && zeros.last().unwrap().1 == n - 1 {
            let (_, last) = zeros.pop().unwrap();
            zeros[0] = (last, zeros[0].1 + n); // wrapped run
        }
        let locs: Vec<f64> = zeros
            .iter()
            .map(|&(a, b)| {
                let mid = (a + b + if b < a { n } else { 0 }) / 2 % n;
                table[mid % n].0
            })
            .collect();
        if locs.len() != h {
            return Err(Error::InvalidTrace(format!(
                "profile has {} zeros, need exactly h = {h}",
                locs.len()
            )));
        }
        let mut zeros = locs;
        zeros.sort_by(f64::total_cmp);
        Ok(TraceSpec { h, profile: Profile::Table(table), zeros })
    }

    /// Number of species (one per sector).
    pub fn k(&self) -> usize {
        self.h
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// Summed trace `φ(θ) = Σ_i φ_i(θ)`.
    pub fn value(&self, theta: f64) -> f64 {
        let t = theta.rem_euclid(TWO_PI);
        match &self.profile {
            Profile::CosHalf => (self.h as f64 * t / 2.0).cos().abs(),
            Profile::Table(tab) => {
                let n = tab.len();
                let pos = tab.partition_point(|&(x, _)| x <= t);
                let (t0, v0) = tab[(pos + n - 1) % n];
                let (t1, v1) = tab[pos % n];
                let span = (t1 - t0).rem_euclid(TWO_PI);
                if span == 0.0 {
                    return v0;
                }
                let f = (t - t0).rem_euclid(TWO_PI) / span;
                v0 + f * (v1 - v0)
            }
        }
    }

    /// Which species owns `theta` (0-based).
    pub fn sector_of(&self, theta: f64) -> usize {
        let t = theta.rem_euclid(TWO_PI);
        match self.profile {
            // species 1 is centered at θ = 0; boundaries at (2m±1)π/h
            Profile::CosHalf => {
                let w = TWO_PI / self.h as f64;
                ((t + w / 2.0) / w) as usize % self.h
            }
            // species i owns [z_i, z_{i+1})
            Profile::Table(_) => {
                let pos = self.zeros.partition_point(|&z| z <= t);
                (pos + self.h - 1) % self.h
            }
        }
    }

    /// Sample all species traces on the grid's boundary row. Supports are
    /// pointwise disjoint by construction.
    pub fn sample(&self, grid: StripGrid) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; grid.n_theta]; self.k()];
        for i in 0..grid.n_theta {
            let t = grid.theta(i);
            rows[self.sector_of(t)][i] = self.value(t);
        }
        rows
    }
}

#[derive(Debug, Clone)]
pub struct NondegeneracyReport {
    /// Smallest one-sided slope magnitude found over all zeros.
    pub min_slope: f64,
    /// Zero locations that were probed.
    pub zeros: Vec<f64>,
}

/// Check that the summed trace vanishes linearly at each of its zeros
/// (finite-difference slope of magnitude at least `min_slope` on both
/// sides). `samples` sets the probing step `δ = 2π / samples`.
pub fn validate_nondegeneracy(
    spec: &TraceSpec,
    samples: usize,
    min_slope: f64,
) -> Result<NondegeneracyReport> {
    let delta = TWO_PI / samples.max(16) as f64;
    let mut worst = f64::INFINITY;
    for &z in &spec.zeros {
        let left = (spec.value(z - delta) - spec.value(z)).abs() / delta;
        let right = (spec.value(z + delta) - spec.value(z)).abs() / delta;
        let slope = left.min(right);
        if slope < min_slope {
            return Err(Error::DegenerateTrace { theta: z, slope, min_slope });
        }
        worst = worst.min(slope);
    }
    Ok(NondegeneracyReport { min_slope: worst, zeros: spec.zeros.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_low_multiplicity() {
        assert!(make_sector_traces(2).is_err());
        assert!(make_sector_traces(0).is_err());
        assert!(make_sector_traces(3).is_ok());
    }

    #[test]
    fn h3_alignment() {
        let spec = make_sector_traces(3).unwrap();
        // species 1 is centered at θ = 0 and peaks there
        assert_eq!(spec.sector_of(0.0), 0);
        assert!((spec.value(0.0) - 1.0).abs() < 1e-15);
        // zeros at π/3 + 2πm/3, where consecutive sectors meet
        for m in 0..3 {
            let z = PI / 3.0 + TWO_PI * m as f64 / 3.0;
            assert!(spec.value(z) < 1e-12);
            assert!((spec.zeros()[m] - z).abs() < 1e-12);
        }
        assert_eq!(spec.sector_of(PI / 2.0), 1);
        assert_eq!(spec.sector_of(PI), 2); // zeros belong to the sector they open
        assert_eq!(spec.sector_of(4.0), 2); // 4 rad sits in the third sector
    }

    #[test]
    fn h4_zeros() {
        let spec = make_sector_traces(4).unwrap();
        for m in 0..4 {
            let z = PI / 4.0 + PI / 2.0 * m as f64;
            assert!(spec.value(z) < 1e-12);
        }
        assert_eq!(spec.k(), 4);
    }

    #[test]
    fn sampled_traces_are_disjoint_and_cover() {
        let g = StripGrid::new(256, 4, 1.0).unwrap();
        let spec = make_sector_traces(3).unwrap();
        let rows = spec.sample(g);
        assert_eq!(rows.len(), 3);
        for i in 0..g.n_theta {
            let t = g.theta(i);
            let sum: f64 = rows.iter().map(|r| r[i]).sum();
            assert!((sum - spec.value(t)).abs() < 1e-15);
            for a in 0..3 {
                for b in a + 1..3 {
                    assert_eq!(rows[a][i] * rows[b][i], 0.0);
                }
            }
        }
        // h support arcs along the boundary row
        let mut arcs = 0;
        for s in 0..3 {
            let mut inside = rows[s][g.n_theta - 1] > 0.0;
            for i in 0..g.n_theta {
                let now = rows[s][i] > 0.0;
                if now && !inside {
                    arcs += 1;
                }
                inside = now;
            }
        }
        assert_eq!(arcs, 3);
    }

    #[test]
    fn nondegenerate_standard_traces() {
        let spec = make_sector_traces(3).unwrap();
        let rep = validate_nondegeneracy(&spec, 4096, 0.1).unwrap();
        // |cos(3θ/2)| leaves its zeros with slope 3/2
        assert!((rep.min_slope - 1.5).abs() < 0.01, "slope {}", rep.min_slope);
    }

    // 2046 is divisible by 6, so the zeros of cos(3θ/2) land on table nodes
    fn dense_table(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..2046).map(|i| {
            let t = TWO_PI * i as f64 / 2046.0;
            (t, f(t))
        }).collect()
    }

    #[test]
    fn flat_arc_is_degenerate() {
        let tab = dense_table(|t| ((3.0 * t / 2.0).cos().abs() - 0.4).max(0.0));
        let spec = TraceSpec::from_table(3, tab).unwrap();
        assert!(matches!(
            validate_nondegeneracy(&spec, 4096, 0.1),
            Err(Error::DegenerateTrace { .. })
        ));
    }

    #[test]
    fn quadratic_touch_is_degenerate() {
        let tab = dense_table(|t| (3.0 * t / 2.0).cos().powi(2));
        let spec = TraceSpec::from_table(3, tab).unwrap();
        assert!(matches!(
            validate_nondegeneracy(&spec, 4096, 0.1),
            Err(Error::DegenerateTrace { .. })
        ));
    }

    #[test]
    fn table_zero_count_must_match() {
        let tab = dense_table(|t| (3.0 * t / 2.0).cos().abs());
        assert!(TraceSpec::from_table(4, tab).is_err());
    }
}
