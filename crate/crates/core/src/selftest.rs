//! Fast self-contained checks of the analysis machinery. Nothing here
//! solves the coupled system; everything runs on closed-form fields in a
//! few seconds.

use std::time::Instant;

use crate::grid::{Field, FieldKind, StripGrid};
use crate::segregation::{locate_singular_point, multiplicity_map, NodalCurve};
use crate::solver::{CompetitionMatrix, SystemState};
use crate::spectral::{
    alpha_of, expansion_state, fourier_rows, lambda_of, nice_bad_split, predicted_nu, reduce_lift,
    spectral_constants, synth_harmonic, weights_u,
};
use crate::spiral::{fit_spiral, vanishing_order};
use crate::traces::make_sector_traces;

/// Frozen expected constants for the three stock matrices. The check
/// recomputes each from its matrix and compares against these literals.
#[derive(Debug, Clone)]
pub struct ConstantsRow {
    pub label: &'static str,
    pub matrix: CompetitionMatrix,
    pub h: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub nu: f64,
}

pub fn reference_table() -> Vec<ConstantsRow> {
    vec![
        ConstantsRow {
            label: "symmetric",
            matrix: CompetitionMatrix::symmetric(3),
            h: 3,
            lambda: 1.0,
            alpha: 0.0,
            nu: 1.5,
        },
        ConstantsRow {
            label: "cyclic:4",
            matrix: CompetitionMatrix::cyclic(3, 4.0).expect("stock matrix"),
            h: 3,
            lambda: 64.0,
            alpha: 0.6619068004579548,
            nu: 1.7920804083283246,
        },
        ConstantsRow {
            label: "cyclic:10",
            matrix: CompetitionMatrix::cyclic(3, 10.0).expect("stock matrix"),
            h: 3,
            lambda: 1000.0,
            alpha: 1.0994033983191416,
            nu: 2.305791888157118,
        },
    ]
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-12 * y.abs().max(1.0)
}

/// Recomputes λ, α, ν for every row and compares against the stored
/// values at 1e-12 relative tolerance.
pub fn check_constants_table(rows: &[ConstantsRow]) -> Result<(), String> {
    for row in rows {
        let lambda = lambda_of(&row.matrix);
        let alpha = alpha_of(lambda);
        let nu = predicted_nu(row.h, alpha);
        if !close(lambda, row.lambda) {
            return Err(format!(
                "{}: lambda computed {lambda:.17e}, table {:.17e}",
                row.label, row.lambda
            ));
        }
        if !close(alpha, row.alpha) {
            return Err(format!(
                "{}: alpha computed {alpha:.17e}, table {:.17e}",
                row.label, row.alpha
            ));
        }
        if !close(nu, row.nu) {
            return Err(format!(
                "{}: nu computed {nu:.17e}, table {:.17e}",
                row.label, row.nu
            ));
        }
    }
    Ok(())
}

type CheckResult = Result<String, String>;

fn grid_roundtrip() -> CheckResult {
    let grid = StripGrid::new(64, 33, 5.0).unwrap();
    let mut worst = 0.0f64;
    for j in 0..grid.n_y {
        for i in 0..grid.n_theta {
            let (x, y) = grid.to_cartesian(grid.theta(i), grid.y(j));
            let (theta, depth) = grid
                .from_cartesian(x, y)
                .map_err(|e| format!("node ({i}, {j}) left the disk: {e}"))?;
            let dt = (theta - grid.theta(i)).rem_euclid(2.0 * std::f64::consts::PI);
            let dt = dt.min(2.0 * std::f64::consts::PI - dt);
            worst = worst.max(dt).max((depth - grid.y(j)).abs());
        }
    }
    if worst < 1e-9 {
        Ok(format!("worst coordinate error {worst:.2e}"))
    } else {
        Err(format!("coordinate roundtrip off by {worst:.2e}"))
    }
}

fn laplacian_order() -> CheckResult {
    // Harmonic in the strip: residual is pure truncation error, O(Δ²).
    let residual = |n: usize| {
        let grid = StripGrid::new(n, n + 1, 3.0).unwrap();
        let f = Field::from_fn(grid, FieldKind::Diagnostic, |theta, y| (-y).exp() * theta.cos());
        let lap = crate::grid::strip_laplacian(&f);
        let mut worst = 0.0f64;
        for j in 1..grid.n_y - 1 {
            for i in 0..grid.n_theta {
                worst = worst.max(lap.at(i, j).abs());
            }
        }
        worst
    };
    let (coarse, fine) = (residual(24), residual(48));
    let order = (coarse / fine).log2();
    if order > 1.8 {
        Ok(format!("observed order {order:.2}"))
    } else {
        Err(format!("laplacian converges at order {order:.2}, expected ~2"))
    }
}

fn fourier_roundtrip() -> CheckResult {
    let grid = StripGrid::new(128, 65, 4.0).unwrap();
    let alpha = 0.4;
    let modes = [(2i32, 0.8, -0.3), (5i32, 0.0, 0.6)];
    let v = synth_harmonic(grid, alpha, &modes);
    let w = reduce_lift(&v, alpha);
    let table = fourier_rows(&w, alpha).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for &(k, a, b) in &modes {
        let (ca, cb) = table.coeff(k);
        worst = worst.max((ca - a).abs()).max((cb - b).abs());
    }
    let split = nice_bad_split(&table, 1e-6);
    if worst > 1e-8 {
        return Err(format!("coefficient error {worst:.2e}"));
    }
    if split.e_bad > 1e-12 * split.e_nice {
        return Err(format!("spurious decaying-mode energy {:.2e}", split.e_bad));
    }
    Ok(format!("coefficient error {worst:.2e}"))
}

fn period_identity() -> CheckResult {
    let grid = StripGrid::new(96, 49, 3.0).unwrap();
    let alpha = 0.55;
    let lambda = (2.0 * std::f64::consts::PI * alpha).exp();
    let modes = [(1i32, 0.7, 0.2), (3i32, -0.4, 0.5)];
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for j in 0..grid.n_y {
        for i in 0..grid.n_theta {
            let (x, y) = (grid.theta(i), grid.y(j));
            let a = crate::spectral::eval_harmonic(alpha, &modes, x + 2.0 * std::f64::consts::PI, y);
            let b = lambda * crate::spectral::eval_harmonic(alpha, &modes, x, y);
            worst = worst.max((a - b).abs());
            scale = scale.max(b.abs());
        }
    }
    let worst = worst / scale;
    if worst < 1e-12 {
        Ok(format!("relative mismatch {worst:.2e}"))
    } else {
        Err(format!("multiplicative period violated by {worst:.2e}"))
    }
}

fn spiral_fit_exact() -> CheckResult {
    let h = 3usize;
    let alpha = 0.6619068004579548;
    let slope = -2.0 * alpha / h as f64;
    let points: Vec<(f64, f64)> = (0..200)
        .map(|n| {
            let y = 0.5 + 6.0 * n as f64 / 199.0;
            (1.0 + slope * y, y)
        })
        .collect();
    let curve = NodalCurve { species: (0, 1), points, fragments: 1, partial: false };
    let fit = fit_spiral(&curve, h, (1.0, 6.0)).map_err(|e| e.to_string())?;
    let err = (fit.alpha_fit - alpha).abs();
    if err < 1e-10 {
        Ok(format!("alpha error {err:.2e}"))
    } else {
        Err(format!("exact spiral misfit {err:.2e}"))
    }
}

fn order_fit_synthetic() -> CheckResult {
    let grid = StripGrid::new(96, 129, 7.0).unwrap();
    let nu = 1.75;
    let u = Field::from_fn(grid, FieldKind::Diagnostic, |theta, y| {
        (-nu * y).exp() * (1.5 * theta).cos()
    });
    let fit = vanishing_order(&u, None, (1.0, 6.0)).map_err(|e| e.to_string())?;
    let err = (fit.nu_fit - nu).abs();
    if err < 0.02 {
        Ok(format!("nu error {err:.2e}"))
    } else {
        Err(format!("order fit off by {err:.2e}"))
    }
}

fn expansion_pipeline() -> CheckResult {
    let matrix = CompetitionMatrix::cyclic(3, 4.0).map_err(|e| e.to_string())?;
    let c = spectral_constants(3, &matrix).map_err(|e| e.to_string())?;
    let grid = StripGrid::new(128, 129, 7.0).unwrap();
    let state = expansion_state(grid, c.h, c.alpha, c.nu, &weights_u(&matrix));
    let delta = 1e-3
        * state
            .fields
            .iter()
            .fold(0.0f64, |m, f| m.max(f.max_abs()));

    let curves =
        crate::segregation::extract_nodal_curves(&state, &matrix, delta).map_err(|e| e.to_string())?;
    if curves.len() != 3 {
        return Err(format!("{} nodal curves, expected 3", curves.len()));
    }
    let mut worst = 0.0f64;
    for curve in &curves {
        let fit = fit_spiral(curve, c.h, (1.5, 5.5)).map_err(|e| e.to_string())?;
        worst = worst.max((fit.alpha_fit - c.alpha).abs());
    }
    if worst > 0.02 * c.alpha.abs() {
        return Err(format!("alpha misfit {worst:.2e} on the synthetic expansion"));
    }

    let map = multiplicity_map(&state, delta, 3.0).map_err(|e| e.to_string())?;
    let cluster = locate_singular_point(&map).ok_or("no multiplicity >= 3 cluster")?;
    if !cluster.unique {
        return Err(format!("{} clusters, expected one", cluster.clusters.len()));
    }
    let dist = cluster.clusters[0].dist_cells;
    if dist > 2.0 {
        return Err(format!("cluster sits {dist:.2} cells from the origin"));
    }
    Ok(format!("alpha misfit {worst:.2e}, cluster at {dist:.2} cells"))
}

fn constants_table() -> CheckResult {
    check_constants_table(&reference_table())?;
    Ok("3 matrices match at 1e-12".into())
}

fn field_io_roundtrip() -> CheckResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = StripGrid::new(32, 17, 3.0).unwrap();
    let field = Field::from_fn(grid, FieldKind::Species(1), |theta, y| {
        (2.0 * theta).sin() * (-0.9 * y).exp() + std::f64::consts::E
    });
    let path = dir.path().join("f.csv");
    crate::io::write_field_csv(&path, &field).map_err(|e| e.to_string())?;
    let back = crate::io::read_field_csv(&path).map_err(|e| e.to_string())?;
    for (a, b) in back.values.iter().zip(&field.values) {
        if a.to_bits() != b.to_bits() {
            return Err(format!("value drifted: {a:.17e} vs {b:.17e}"));
        }
    }
    Ok("bit-exact".into())
}

fn checkpoint_roundtrip() -> CheckResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = StripGrid::new(32, 17, 3.0).unwrap();
    let state = SystemState {
        beta: 1e4,
        fields: (0..3)
            .map(|s| {
                Field::from_fn(grid, FieldKind::Species(s), |theta, y| {
                    ((s + 1) as f64 * theta).cos().max(0.0) * (-y).exp()
                })
            })
            .collect(),
        defect: 1e-10,
        sweeps: 7,
        converged: true,
        history: vec![],
    };
    let cp = dir.path().join("stage");
    crate::io::write_checkpoint(&cp, &state).map_err(|e| e.to_string())?;
    let back = crate::io::read_checkpoint(&cp).map_err(|e| e.to_string())?;
    if back.beta != state.beta || back.k() != 3 || !back.converged {
        return Err("manifest metadata drifted".into());
    }
    Ok("manifest and fields restored".into())
}

fn boundary_traces() -> CheckResult {
    for h in [3usize, 4, 5] {
        let spec = make_sector_traces(h).map_err(|e| format!("h = {h}: {e}"))?;
        crate::traces::validate_nondegeneracy(&spec, 4096, 0.1)
            .map_err(|e| format!("h = {h}: {e}"))?;
    }
    Ok("h = 3, 4, 5 traces nondegenerate".into())
}

#[derive(Debug)]
pub struct SelftestResult {
    pub name: &'static str,
    pub outcome: CheckResult,
    pub millis: u128,
}

#[derive(Debug)]
pub struct SelftestReport {
    pub results: Vec<SelftestResult>,
    pub passed: bool,
}

impl SelftestReport {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for r in &self.results {
            let (tag, detail) = match &r.outcome {
                Ok(d) => ("PASS", d),
                Err(d) => ("FAIL", d),
            };
            writeln!(out, "selftest {:22} {tag} [{} ms] {detail}", r.name, r.millis).unwrap();
        }
        writeln!(
            out,
            "selftest verdict: {}",
            if self.passed { "PASS" } else { "FAIL" }
        )
        .unwrap();
        out
    }
}

pub fn run_selftest() -> SelftestReport {
    let checks: [(&'static str, fn() -> CheckResult); 10] = [
        ("constants-table", constants_table),
        ("grid-roundtrip", grid_roundtrip),
        ("laplacian-order", laplacian_order),
        ("boundary-traces", boundary_traces),
        ("fourier-roundtrip", fourier_roundtrip),
        ("period-identity", period_identity),
        ("spiral-fit", spiral_fit_exact),
        ("vanishing-order", order_fit_synthetic),
        ("expansion-pipeline", expansion_pipeline),
        ("field-io", field_io_roundtrip),
    ];
    let mut results = Vec::with_capacity(checks.len() + 1);
    for (name, f) in checks {
        let start = Instant::now();
        let outcome = f();
        results.push(SelftestResult { name, outcome, millis: start.elapsed().as_millis() });
    }
    let start = Instant::now();
    results.push(SelftestResult {
        name: "checkpoint-io",
        outcome: checkpoint_roundtrip(),
        millis: start.elapsed().as_millis(),
    });
    let passed = results.iter().all(|r| r.outcome.is_ok());
    SelftestReport { results, passed }
}
