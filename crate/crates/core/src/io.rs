//! Disk formats: field CSV, state checkpoints, curve/constants/Fourier
//! exports and PGM renderings. All floats are written with 17 significant
//! digits so a read-back is bit-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, StripGrid};
use crate::segregation::{MultiplicityMap, NodalCurve};
use crate::solver::SystemState;
use crate::spectral::{FourierTable, SpectralConstants};

/// 17 significant digits: enough that `parse` recovers the exact f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn kind_tag(kind: FieldKind) -> String {
    match kind {
        FieldKind::Species(i) => format!("species:{i}"),
        FieldKind::Signed => "signed".into(),
        FieldKind::Diagnostic => "diagnostic".into(),
    }
}

fn parse_kind(tag: &str) -> Option<FieldKind> {
    match tag {
        "signed" => Some(FieldKind::Signed),
        "diagnostic" => Some(FieldKind::Diagnostic),
        other => {
            let i = other.strip_prefix("species:")?.parse().ok()?;
            Some(FieldKind::Species(i))
        }
    }
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn open_err(path: &Path, e: std::io::Error) -> Error {
    format_err(path, 0, e.to_string())
}

/// Field file: two header lines (`# field <kind>`, `# grid nt ny y_max`)
/// followed by one comma-separated line per strip row.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let g = field.grid;
    let mut text = String::new();
    writeln!(text, "# field {}", kind_tag(field.kind)).unwrap();
    writeln!(text, "# grid {} {} {}", g.n_theta, g.n_y, fmt_g17(g.y_max)).unwrap();
    let mut row_buf = Vec::with_capacity(g.n_theta);
    for j in 0..g.n_y {
        row_buf.clear();
        row_buf.extend(field.row(j).iter().map(|&v| fmt_g17(v)));
        writeln!(text, "{}", row_buf.join(",")).unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<Field> {
    let text = std::fs::read_to_string(path).map_err(|e| open_err(path, e))?;
    let mut lines = text.lines().enumerate();

    let (ln, first) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let kind = first
        .strip_prefix("# field ")
        .and_then(parse_kind)
        .ok_or_else(|| format_err(path, ln + 1, format!("bad field header {first:?}")))?;

    let (ln, second) = lines
        .next()
        .ok_or_else(|| format_err(path, 2, "missing grid header"))?;
    let parts: Vec<&str> = second
        .strip_prefix("# grid ")
        .map(|rest| rest.split_whitespace().collect())
        .unwrap_or_default();
    if parts.len() != 3 {
        return Err(format_err(path, ln + 1, format!("bad grid header {second:?}")));
    }
    let n_theta: usize = parts[0]
        .parse()
        .map_err(|_| format_err(path, ln + 1, "bad n_theta"))?;
    let n_y: usize = parts[1]
        .parse()
        .map_err(|_| format_err(path, ln + 1, "bad n_y"))?;
    let y_max: f64 = parts[2]
        .parse()
        .map_err(|_| format_err(path, ln + 1, "bad y_max"))?;
    let grid = StripGrid::new(n_theta, n_y, y_max)
        .map_err(|e| format_err(path, ln + 1, e.to_string()))?;

    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut rows = 0usize;
    for (idx, line) in lines {
        let before = values.len();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                format_err(path, idx + 1, format!("bad value {:?}", cell.trim()))
            })?;
            values.push(v);
        }
        if values.len() - before != n_theta {
            return Err(format_err(
                path,
                idx + 1,
                format!("row has {} values, expected {n_theta}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n_y {
        return Err(format_err(
            path,
            rows + 2,
            format!("file has {rows} rows, expected {n_y}"),
        ));
    }
    Ok(Field { grid, kind, values })
}

/// A solved state persists as a directory: `manifest.txt` plus one field
/// file per species.
pub fn write_checkpoint(dir: &Path, state: &SystemState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    writeln!(manifest, "format = state-v1").unwrap();
    writeln!(manifest, "beta = {}", fmt_g17(state.beta)).unwrap();
    writeln!(manifest, "k = {}", state.k()).unwrap();
    writeln!(manifest, "defect = {}", fmt_g17(state.defect)).unwrap();
    writeln!(manifest, "sweeps = {}", state.sweeps).unwrap();
    writeln!(manifest, "converged = {}", state.converged).unwrap();
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    for (i, field) in state.fields.iter().enumerate() {
        write_field_csv(&dir.join(format!("u_{i}.csv")), field)?;
    }
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<SystemState> {
    let manifest_path = dir.join("manifest.txt");
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| open_err(&manifest_path, e))?;

    let mut beta = None;
    let mut k = None;
    let mut defect = None;
    let mut sweeps = None;
    let mut converged = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let ln = idx + 1;
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format_err(&manifest_path, ln, format!("bad line {line:?}")))?;
        let bad = |what: &str| format_err(&manifest_path, ln, format!("bad {what} {value:?}"));
        match key {
            "format" => {
                if value != "state-v1" {
                    return Err(format_err(
                        &manifest_path,
                        ln,
                        format!("unsupported format {value:?}"),
                    ));
                }
            }
            "beta" => beta = Some(value.parse().map_err(|_| bad("beta"))?),
            "k" => k = Some(value.parse().map_err(|_| bad("k"))?),
            "defect" => defect = Some(value.parse().map_err(|_| bad("defect"))?),
            "sweeps" => sweeps = Some(value.parse().map_err(|_| bad("sweeps"))?),
            "converged" => converged = Some(value.parse().map_err(|_| bad("converged"))?),
            other => {
                return Err(format_err(
                    &manifest_path,
                    ln,
                    format!("unknown key {other:?}"),
                ))
            }
        }
    }
    let missing = |what: &str| format_err(&manifest_path, 0, format!("missing {what}"));
    let beta: f64 = beta.ok_or_else(|| missing("beta"))?;
    let k: usize = k.ok_or_else(|| missing("k"))?;
    if k == 0 {
        return Err(format_err(&manifest_path, 0, "k must be positive"));
    }

    let mut fields = Vec::with_capacity(k);
    for i in 0..k {
        let field = read_field_csv(&dir.join(format!("u_{i}.csv")))?;
        if let Some(prev) = fields.first() {
            let p: &Field = prev;
            if p.grid != field.grid {
                return Err(format_err(
                    &dir.join(format!("u_{i}.csv")),
                    2,
                    "grid differs from the first species file",
                ));
            }
        }
        fields.push(field);
    }
    Ok(SystemState {
        beta,
        fields,
        defect: defect.ok_or_else(|| missing("defect"))?,
        sweeps: sweeps.ok_or_else(|| missing("sweeps"))?,
        converged: converged.ok_or_else(|| missing("converged"))?,
        history: Vec::new(),
    })
}

/// Nodal curve export: θ_unwrapped, y, then disk coordinates r, px, py.
pub fn write_curve_csv(path: &Path, curve: &NodalCurve) -> Result<()> {
    let mut text = String::new();
    writeln!(
        text,
        "# curve species {} {} fragments {} partial {}",
        curve.species.0, curve.species.1, curve.fragments, curve.partial
    )
    .unwrap();
    writeln!(text, "theta_unwrapped,y,r,px,py").unwrap();
    for &(theta, y) in &curve.points {
        let r = (-y).exp();
        writeln!(
            text,
            "{},{},{},{},{}",
            fmt_g17(theta),
            fmt_g17(y),
            fmt_g17(r),
            fmt_g17(r * theta.cos()),
            fmt_g17(r * theta.sin())
        )
        .unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_constants_csv(path: &Path, c: &SpectralConstants) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "name,value").unwrap();
    writeln!(text, "h,{}", c.h).unwrap();
    writeln!(text, "lambda,{}", fmt_g17(c.lambda)).unwrap();
    writeln!(text, "alpha,{}", fmt_g17(c.alpha)).unwrap();
    writeln!(text, "nu,{}", fmt_g17(c.nu)).unwrap();
    writeln!(text, "doubled,{}", c.doubled).unwrap();
    writeln!(text, "n_star,{}", c.n_star).unwrap();
    for (i, w) in c.weights.iter().enumerate() {
        writeln!(text, "weight_{i},{}", fmt_g17(*w)).unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_fourier_csv(path: &Path, table: &FourierTable) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "k,a_k,b_k,energy").unwrap();
    for &(k, a, b) in table.coeffs() {
        writeln!(
            text,
            "{k},{},{},{}",
            fmt_g17(a),
            fmt_g17(b),
            fmt_g17(a * a + b * b)
        )
        .unwrap();
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Multiplicity map as an 8-bit image, one pixel per strip node, outer
/// circle at the top. Counts are stretched over the full gray range.
pub fn write_multiplicity_pgm(path: &Path, map: &MultiplicityMap) -> Result<()> {
    let top = map.values.iter().copied().max().unwrap_or(0).max(1) as u16;
    let pixels: Vec<u8> = map
        .values
        .iter()
        .map(|&m| ((m as u16 * 255) / top) as u8)
        .collect();
    write_pgm(path, map.grid.n_theta, map.grid.n_y, &pixels)
}

/// Field rendering: linear gray map over [min, max].
pub fn write_field_pgm(path: &Path, field: &Field) -> Result<()> {
    let lo = field.min();
    let hi = field.max();
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let pixels: Vec<u8> = field
        .values
        .iter()
        .map(|&v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_pgm(path, field.grid.n_theta, field.grid.n_y, &pixels)
}

/// `<out>/<name>/beta_<value>` with the value in scientific notation.
pub fn stage_dir(out: &Path, name: &str, beta: f64) -> PathBuf {
    out.join(name).join(format!("beta_{beta:e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StripGrid;

    fn grid() -> StripGrid {
        StripGrid::new(16, 9, 4.0).unwrap()
    }

    #[test]
    fn g17_roundtrips_exactly() {
        for &x in &[0.1, 1.0 / 3.0, 6.02e23, -7.3e-12, 0.6619068004579548] {
            let parsed: f64 = fmt_g17(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn field_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let field = Field::from_fn(grid(), FieldKind::Species(2), |theta, y| {
            (theta * 3.0).sin() * (-0.7 * y).exp() + 1.0 / 3.0
        });
        write_field_csv(&path, &field).unwrap();
        let back = read_field_csv(&path).unwrap();
        assert_eq!(back.kind, FieldKind::Species(2));
        assert_eq!(back.grid, field.grid);
        for (a, b) in back.values.iter().zip(&field.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn short_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let field = Field::zeros(grid(), FieldKind::Diagnostic);
        write_field_csv(&path, &field).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mangled = lines[4].rsplit_once(',').unwrap().0.to_string();
        let mut out: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        out[4] = mangled;
        text = out.join("\n");
        std::fs::write(&path, text).unwrap();
        match read_field_csv(&path) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_value_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(
            &path,
            "# field signed\n# grid 16 2 1.0\n".to_string()
                + &vec!["0.0"; 16].join(",")
                + "\n0.0,nope,"
                + &vec!["0.0"; 14].join(",")
                + "\n",
        )
        .unwrap();
        match read_field_csv(&path) {
            Err(Error::Format { line, msg, .. }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("nope"), "{msg}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let state = SystemState {
            beta: 1e3,
            fields: (0..3)
                .map(|s| {
                    Field::from_fn(g, FieldKind::Species(s), |theta, y| {
                        ((s as f64 + 1.0) * theta).cos() * (-y).exp()
                    })
                })
                .collect(),
            defect: 3.5e-9,
            sweeps: 41,
            converged: true,
            history: vec![1.0, 0.1],
        };
        let cp = dir.path().join("stage");
        write_checkpoint(&cp, &state).unwrap();
        let back = read_checkpoint(&cp).unwrap();
        assert_eq!(back.beta, 1e3);
        assert_eq!(back.k(), 3);
        assert_eq!(back.defect, 3.5e-9);
        assert_eq!(back.sweeps, 41);
        assert!(back.converged);
        for (a, b) in back.fields.iter().zip(&state.fields) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn corrupted_manifest_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let state = SystemState {
            beta: 10.0,
            fields: vec![Field::zeros(g, FieldKind::Species(0))],
            defect: 0.0,
            sweeps: 1,
            converged: false,
            history: vec![],
        };
        let cp = dir.path().join("stage");
        write_checkpoint(&cp, &state).unwrap();
        let manifest = cp.join("manifest.txt");
        let text = std::fs::read_to_string(&manifest)
            .unwrap()
            .replace(&fmt_g17(10.0), "ten");
        std::fs::write(&manifest, text).unwrap();
        match read_checkpoint(&cp) {
            Err(Error::Format { path, line, .. }) => {
                assert!(path.ends_with("manifest.txt"), "{path}");
                assert_eq!(line, 2);
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_species_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let state = SystemState {
            beta: 10.0,
            fields: vec![
                Field::zeros(g, FieldKind::Species(0)),
                Field::zeros(g, FieldKind::Species(1)),
            ],
            defect: 0.0,
            sweeps: 1,
            converged: true,
            history: vec![],
        };
        let cp = dir.path().join("stage");
        write_checkpoint(&cp, &state).unwrap();
        std::fs::remove_file(cp.join("u_1.csv")).unwrap();
        assert!(read_checkpoint(&cp).is_err());
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let curve = NodalCurve {
            species: (0, 2),
            points: vec![(0.1, 0.0), (0.2, 0.5), (0.3, 1.0)],
            fragments: 1,
            partial: false,
        };
        write_curve_csv(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("theta_unwrapped,y,r"));
        let cells: Vec<f64> = lines[3].split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cells[2] - (-0.5_f64).exp()).abs() < 1e-15);
        assert!((cells[3] - cells[2] * 0.2_f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn multiplicity_pgm_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let g = grid();
        let map = MultiplicityMap {
            grid: g,
            values: vec![0; g.n_nodes()],
            delta: 1e-3,
            rho: 3.0,
            r_ball: 0.1,
        };
        write_multiplicity_pgm(&path, &map).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = format!("P5\n{} {}\n255\n", g.n_theta, g.n_y);
        assert!(bytes.starts_with(header.as_bytes()));
        assert_eq!(bytes.len(), header.len() + g.n_nodes());
    }
}
