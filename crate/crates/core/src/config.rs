//! Experiment configuration: flat key=value files, named presets, CLI overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::solver::{CompetitionMatrix, RelaxOptions};

/// Everything a solve or analysis run needs, fully resolved.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Label used for output subdirectories and report headers.
    pub name: String,
    /// Number of boundary sectors; equals the number of species.
    pub h: usize,
    pub matrix: CompetitionMatrix,
    pub n_theta: usize,
    pub n_y: usize,
    pub y_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_steps_per_decade: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Presence threshold, relative to the global field maximum.
    pub delta_rel: f64,
    /// Probe ball radius for the multiplicity map, in cells.
    pub rho: f64,
    /// Depth window (in y) for spiral and vanishing-order fits.
    pub fit_window: (f64, f64),
    /// Narrower window used for the fit-stability cross check.
    pub stability_window: (f64, f64),
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (matrix, label) = match name {
            "fig1a" => (CompetitionMatrix::symmetric(3), "fig1a"),
            "fig1b" => (CompetitionMatrix::cyclic(3, 4.0)?, "fig1b"),
            "fig1c" => (CompetitionMatrix::cyclic(3, 10.0)?, "fig1c"),
            other => {
                return Err(Error::InvalidMatrix(format!(
                    "unknown preset {other:?}; expected fig1a, fig1b or fig1c"
                )))
            }
        };
        Ok(ExperimentConfig {
            name: label.to_string(),
            h: 3,
            matrix,
            n_theta: 512,
            n_y: 512,
            y_max: 8.0,
            beta_min: 1e1,
            beta_max: 1e7,
            beta_steps_per_decade: 1,
            outer_tol: 1e-9,
            max_outer: 600,
            delta_rel: 1e-3,
            rho: 3.0,
            fit_window: crate::spiral::DEFAULT_FIT_WINDOW,
            stability_window: (2.0, 3.0),
            out_dir: PathBuf::from("out"),
        })
    }

    /// Geometric schedule from `beta_min` to `beta_max`, strictly increasing.
    pub fn beta_schedule(&self) -> Vec<f64> {
        let decades = (self.beta_max / self.beta_min).log10();
        let n = (decades * self.beta_steps_per_decade as f64).round() as usize;
        let n = n.max(1);
        let ratio = (self.beta_max / self.beta_min).powf(1.0 / n as f64);
        let mut schedule = Vec::with_capacity(n + 1);
        let mut beta = self.beta_min;
        schedule.push(beta);
        for _ in 0..n {
            beta *= ratio;
            schedule.push(beta);
        }
        *schedule.last_mut().unwrap() = self.beta_max;
        schedule
    }

    pub fn relax_options(&self) -> RelaxOptions {
        RelaxOptions {
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            ..RelaxOptions::default()
        }
    }

    /// Presence threshold in absolute units for a state with the given max.
    pub fn delta_for(&self, field_max: f64) -> f64 {
        self.delta_rel * field_max
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidMatrix(msg));
        if self.h < 3 {
            return fail(format!("h = {} but at least 3 sectors are needed", self.h));
        }
        if self.matrix.k != self.h {
            return fail(format!(
                "matrix is {0}x{0} but h = {1}; species and sector counts must match",
                self.matrix.k, self.h
            ));
        }
        if !(self.beta_min > 0.0 && self.beta_max > self.beta_min) {
            return fail(format!(
                "beta schedule needs 0 < beta_min < beta_max, got {} .. {}",
                self.beta_min, self.beta_max
            ));
        }
        if self.beta_steps_per_decade == 0 {
            return fail("beta_steps_per_decade must be at least 1".into());
        }
        for (lo, hi) in [self.fit_window, self.stability_window] {
            if !(0.0 <= lo && lo < hi && hi <= self.y_max) {
                return fail(format!(
                    "fit window [{lo}, {hi}] must sit inside [0, {}]",
                    self.y_max
                ));
            }
        }
        if !(self.delta_rel > 0.0 && self.delta_rel < 1.0) {
            return fail(format!("delta_rel = {} out of (0, 1)", self.delta_rel));
        }
        if self.rho < 2.0 {
            return fail(format!("rho = {} but probe balls need rho >= 2", self.rho));
        }
        Ok(())
    }
}

/// Parsed but not yet validated key=value assignments, in file order.
struct RawConfig {
    path: String,
    entries: Vec<(usize, String, String)>,
}

fn parse_raw(path: &Path, text: &str) -> Result<RawConfig> {
    let path_str = path.display().to_string();
    let mut entries = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                path: path_str,
                line: line_no,
                msg: format!("expected key = value, got {line:?}"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config {
                path: path_str,
                line: line_no,
                msg: "empty key or value".into(),
            });
        }
        entries.push((line_no, key, value));
    }
    Ok(RawConfig { path: path_str, entries })
}

const KNOWN_KEYS: &[&str] = &[
    "preset",
    "name",
    "h",
    "matrix",
    "grid",
    "y_max",
    "beta_min",
    "beta_max",
    "beta_steps_per_decade",
    "outer_tol",
    "max_outer",
    "delta_rel",
    "rho",
    "fit_window",
    "stability_window",
    "out",
];

fn parse_matrix(value: &str, h: usize) -> std::result::Result<CompetitionMatrix, String> {
    if value == "symmetric" {
        return Ok(CompetitionMatrix::symmetric(h));
    }
    if let Some(c) = value.strip_prefix("cyclic:") {
        let c: f64 = c
            .parse()
            .map_err(|_| format!("cyclic bias {c:?} is not a number"))?;
        return CompetitionMatrix::cyclic(h, c).map_err(|e| e.to_string());
    }
    let entries: Vec<f64> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("matrix {value:?} is neither a preset nor a number list"))?;
    if entries.len() != h * h {
        return Err(format!(
            "matrix list has {} entries, need h*h = {}",
            entries.len(),
            h * h
        ));
    }
    CompetitionMatrix::new(h, entries).map_err(|e| e.to_string())
}

fn parse_grid(value: &str) -> std::result::Result<(usize, usize), String> {
    let Some((nt, ny)) = value.split_once(['x', 'X']) else {
        return Err(format!("grid {value:?} should look like 512x512"));
    };
    let nt = nt.trim().parse().map_err(|_| format!("bad grid width {nt:?}"))?;
    let ny = ny.trim().parse().map_err(|_| format!("bad grid height {ny:?}"))?;
    Ok((nt, ny))
}

fn parse_window(value: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("window {value:?} should be two numbers: lo, hi"));
    }
    let lo = parts[0].parse().map_err(|_| format!("bad window bound {:?}", parts[0]))?;
    let hi = parts[1].parse().map_err(|_| format!("bad window bound {:?}", parts[1]))?;
    Ok((lo, hi))
}

/// Loads a config file. Any `preset` line is applied first, then the
/// remaining keys override it; without a preset the file must at least
/// name a matrix.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let raw = parse_raw(path, &text)?;

    let err_at = |line: usize, msg: String| Error::Config {
        path: raw.path.clone(),
        line,
        msg,
    };

    let mut seen = BTreeSet::new();
    for (line, key, _) in &raw.entries {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(err_at(*line, format!("unknown key {key:?}")));
        }
        if !seen.insert(key.clone()) {
            return Err(err_at(*line, format!("duplicate key {key:?}")));
        }
    }

    let find = |key: &str| {
        raw.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(line, _, v)| (*line, v.as_str()))
    };

    let mut cfg = match find("preset") {
        Some((line, name)) => {
            ExperimentConfig::preset(name).map_err(|e| err_at(line, e.to_string()))?
        }
        None => {
            let mut base = ExperimentConfig::preset("fig1a").expect("builtin preset");
            base.name = "custom".to_string();
            if find("matrix").is_none() {
                return Err(err_at(
                    0,
                    "config needs either a preset or a matrix line".into(),
                ));
            }
            base
        }
    };

    // h first: the matrix parser needs the final species count.
    if let Some((line, v)) = find("h") {
        cfg.h = v.parse().map_err(|_| err_at(line, format!("bad h {v:?}")))?;
    }
    if let Some((line, v)) = find("name") {
        cfg.name = v.to_string();
        let _ = line;
    }
    if let Some((line, v)) = find("matrix") {
        cfg.matrix = parse_matrix(v, cfg.h).map_err(|m| err_at(line, m))?;
    }
    if let Some((line, v)) = find("grid") {
        let (nt, ny) = parse_grid(v).map_err(|m| err_at(line, m))?;
        cfg.n_theta = nt;
        cfg.n_y = ny;
    }
    macro_rules! scalar {
        ($key:literal, $slot:expr) => {
            if let Some((line, v)) = find($key) {
                $slot = v
                    .parse()
                    .map_err(|_| err_at(line, format!(concat!("bad ", $key, " {:?}"), v)))?;
            }
        };
    }
    scalar!("y_max", cfg.y_max);
    scalar!("beta_min", cfg.beta_min);
    scalar!("beta_max", cfg.beta_max);
    scalar!("beta_steps_per_decade", cfg.beta_steps_per_decade);
    scalar!("outer_tol", cfg.outer_tol);
    scalar!("max_outer", cfg.max_outer);
    scalar!("delta_rel", cfg.delta_rel);
    scalar!("rho", cfg.rho);
    if let Some((line, v)) = find("fit_window") {
        cfg.fit_window = parse_window(v).map_err(|m| err_at(line, m))?;
    }
    if let Some((line, v)) = find("stability_window") {
        cfg.stability_window = parse_window(v).map_err(|m| err_at(line, m))?;
    }
    if let Some((_, v)) = find("out") {
        cfg.out_dir = PathBuf::from(v);
    }

    cfg.validate().map_err(|e| Error::Config {
        path: raw.path.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(cfg)
}

/// Command-line overrides applied on top of a preset or config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub beta_max: Option<f64>,
    pub grid: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(beta_max) = self.beta_max {
            cfg.beta_max = beta_max;
        }
        if let Some(grid) = &self.grid {
            let (nt, ny) = parse_grid(grid).map_err(Error::InvalidGrid)?;
            cfg.n_theta = nt;
            cfg.n_y = ny;
        }
        cfg.validate()
    }
}

/// Resolves the config/preset pair shared by the solve-like subcommands.
/// Neither given is a usage error surfaced by the caller.
pub fn resolve_config(
    config: Option<&Path>,
    preset: Option<&str>,
    overrides: &Overrides,
) -> Result<ExperimentConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => {
            return Err(Error::Config {
                path: "<none>".into(),
                line: 0,
                msg: "no config file and no preset given".into(),
            })
        }
    };
    if let (Some(name), Some(_)) = (preset, config) {
        // A preset flag next to an explicit config re-bases the file on it.
        let mut base = ExperimentConfig::preset(name)?;
        base.out_dir = cfg.out_dir.clone();
        // Explicit file keys already won; only fill the matrix family.
        cfg.matrix = base.matrix;
        cfg.name = base.name;
    }
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn presets_resolve() {
        for name in ["fig1a", "fig1b", "fig1c"] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert_eq!(cfg.h, 3);
            assert_eq!(cfg.matrix.k, 3);
            cfg.validate().unwrap();
        }
        assert!(ExperimentConfig::preset("fig9z").is_err());
    }

    #[test]
    fn preset_matrices_differ() {
        let a = ExperimentConfig::preset("fig1a").unwrap();
        let b = ExperimentConfig::preset("fig1b").unwrap();
        assert_eq!(a.matrix.get(0, 1), a.matrix.get(1, 0));
        assert_eq!(b.matrix.get(0, 1), 4.0 * b.matrix.get(1, 0));
    }

    #[test]
    fn schedule_covers_decades() {
        let cfg = ExperimentConfig::preset("fig1a").unwrap();
        let schedule = cfg.beta_schedule();
        assert_eq!(schedule.len(), 7);
        assert_eq!(schedule[0], 1e1);
        assert_eq!(*schedule.last().unwrap(), 1e7);
        for pair in schedule.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn schedule_honors_steps_per_decade() {
        let mut cfg = ExperimentConfig::preset("fig1a").unwrap();
        cfg.beta_max = 1e3;
        cfg.beta_steps_per_decade = 2;
        let schedule = cfg.beta_schedule();
        assert_eq!(schedule.len(), 5);
        assert!((schedule[1] - 10.0_f64.powf(1.5)).abs() < 1e-9);
    }

    #[test]
    fn file_overrides_preset() {
        let (_dir, path) = write_tmp(
            "# comment\n\
             preset = fig1b\n\
             grid = 128x96\n\
             beta_max = 1e5\n\
             fit_window = 1.5, 4.5\n\
             out = results\n",
        );
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.name, "fig1b");
        assert_eq!((cfg.n_theta, cfg.n_y), (128, 96));
        assert_eq!(cfg.beta_max, 1e5);
        assert_eq!(cfg.fit_window, (1.5, 4.5));
        assert_eq!(cfg.out_dir, PathBuf::from("results"));
    }

    #[test]
    fn custom_matrix_without_preset() {
        let (_dir, path) = write_tmp("matrix = cyclic:4\nh = 3\n");
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.name, "custom");
        assert_eq!(cfg.matrix.get(0, 1), 4.0);
    }

    #[test]
    fn explicit_matrix_entries() {
        let (_dir, path) = write_tmp("h = 3\nmatrix = 0,1,2, 3,0,5, 6,7,0\n");
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.matrix.get(1, 2), 5.0);
    }

    #[test]
    fn unknown_key_reports_line() {
        let (_dir, path) = write_tmp("preset = fig1a\nbogus = 12\n");
        match load_config(&path) {
            Err(Error::Config { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line() {
        let (_dir, path) = write_tmp("preset = fig1a\njust words\n");
        match load_config(&path) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let (_dir, path) = write_tmp("preset = fig1a\ny_max = 8\ny_max = 9\n");
        match load_config(&path) {
            Err(Error::Config { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("duplicate"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_size_must_match_h() {
        let (_dir, path) = write_tmp("h = 4\nmatrix = 0,1,1,0\n");
        assert!(load_config(&path).is_err());
    }

    #[test]
    fn bad_window_rejected_by_validate() {
        let (_dir, path) = write_tmp("preset = fig1a\nfit_window = 5, 2\n");
        assert!(load_config(&path).is_err());
    }

    #[test]
    fn overrides_apply_last() {
        let mut cfg = ExperimentConfig::preset("fig1a").unwrap();
        let ov = Overrides {
            out: Some(PathBuf::from("elsewhere")),
            beta_max: Some(1e4),
            grid: Some("64x48".into()),
        };
        ov.apply(&mut cfg).unwrap();
        assert_eq!(cfg.beta_max, 1e4);
        assert_eq!((cfg.n_theta, cfg.n_y), (64, 48));
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn resolve_requires_some_source() {
        let err = resolve_config(None, None, &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn resolve_preset_only() {
        let cfg = resolve_config(None, Some("fig1b"), &Overrides::default()).unwrap();
        assert_eq!(cfg.name, "fig1b");
    }
}
