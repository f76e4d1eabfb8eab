use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};

use segspiral::config::{resolve_config, ExperimentConfig, Overrides};
use segspiral::error::{Error, Result};
use segspiral::grid::StripGrid;
use segspiral::io;
use segspiral::report::{analyze, AnalysisReport};
use segspiral::selftest::run_selftest;
use segspiral::solver::{relax_system, StripSolver, SystemState};
use segspiral::spectral::spectral_constants;
use segspiral::traces::make_sector_traces;

#[derive(Parser)]
#[command(
    name = "segspiral",
    version,
    about = "Continuation solver and spiral-interface analyzer for strongly \
             competing species on the unit disk"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the β continuation and write one checkpoint per stage.
    Solve(RunArgs),
    /// Analyze a checkpoint directory written by solve or sweep.
    Analyze(AnalyzeArgs),
    /// Solve, then analyze the trajectory and export the full report.
    Sweep(RunArgs),
    /// Fast consistency checks of the analysis machinery; no system solves.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: fig1a, fig1b or fig1c.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the last β of the continuation schedule.
    #[arg(long)]
    beta_max: Option<f64>,
    /// Override the grid size, written as NxM (θ columns x depth rows).
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Checkpoint directory (contains manifest.txt and u_*.csv).
    checkpoint: PathBuf,
    /// Flat key = value config file for thresholds and the matrix.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: fig1a, fig1b or fig1c.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Solve(args) => {
            let cfg = config_for(&args)?;
            solve_all(&cfg)?;
            Ok(0)
        }
        Cmd::Sweep(args) => {
            let cfg = config_for(&args)?;
            let states = solve_all(&cfg)?;
            let report = analyze(&states, &cfg)?;
            finish_analysis(&cfg, &report)
        }
        Cmd::Analyze(args) => {
            if args.config.is_none() && args.preset.is_none() {
                usage_exit();
            }
            let overrides = Overrides { out: args.out.clone(), ..Overrides::default() };
            let cfg = resolve_config(args.config.as_deref(), args.preset.as_deref(), &overrides)?;
            let state = io::read_checkpoint(&args.checkpoint)?;
            let report = analyze(std::slice::from_ref(&state), &cfg)?;
            finish_analysis(&cfg, &report)
        }
        Cmd::Selftest => {
            let report = run_selftest();
            print!("{}", report.render());
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}

fn usage_exit() -> ! {
    let mut cmd = Cli::command();
    eprintln!("{}", cmd.render_usage());
    eprintln!("error: a --config file or a --preset name is required");
    std::process::exit(2);
}

fn config_for(args: &RunArgs) -> Result<ExperimentConfig> {
    if args.config.is_none() && args.preset.is_none() {
        usage_exit();
    }
    let overrides = Overrides {
        out: args.out.clone(),
        beta_max: args.beta_max,
        grid: args.grid.clone(),
    };
    resolve_config(args.config.as_deref(), args.preset.as_deref(), &overrides)
}

/// Continuation over the configured schedule with a checkpoint per stage.
/// A stage that misses its tolerance still gets written before the run
/// aborts, so the trajectory up to the failure survives.
fn solve_all(cfg: &ExperimentConfig) -> Result<Vec<SystemState>> {
    let grid = StripGrid::new(cfg.n_theta, cfg.n_y, cfg.y_max)?;
    let spec = make_sector_traces(cfg.h)?;
    let schedule = cfg.beta_schedule();
    let opts = cfg.relax_options();

    let start = Instant::now();
    let mut solver = StripSolver::new(grid)?;
    eprintln!(
        "{}: grid {} x {}, y_max {}, {} stages to beta = {:.1e}",
        cfg.name,
        cfg.n_theta,
        cfg.n_y,
        cfg.y_max,
        schedule.len(),
        cfg.beta_max
    );
    let mut state = relax_system(&mut solver, &SystemState::from_traces(grid, &spec), &cfg.matrix, 0.0, opts)?;
    let mut out = Vec::with_capacity(schedule.len());
    for &beta in &schedule {
        let stage_start = Instant::now();
        state = relax_system(&mut solver, &state, &cfg.matrix, beta, opts)?;
        let dir = io::stage_dir(&cfg.out_dir, &cfg.name, beta);
        io::write_checkpoint(&dir, &state)?;
        eprintln!(
            "  beta {beta:9.3e}: defect {:.3e} after {} sweeps, {:.1}s (total {:.1}s)",
            state.defect,
            state.sweeps,
            stage_start.elapsed().as_secs_f64(),
            start.elapsed().as_secs_f64()
        );
        if !state.converged {
            return Err(Error::SolverNotConverged {
                beta,
                best: state.defect,
                target: opts.outer_tol,
                sweeps: state.sweeps,
            });
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Writes every export for a finished analysis and prints the report.
/// Exit code 0 only if the report's own checks all passed.
fn finish_analysis(cfg: &ExperimentConfig, report: &AnalysisReport) -> Result<i32> {
    let dir = cfg.out_dir.join(&cfg.name).join("analysis");
    write_outputs(&dir, cfg, report)?;
    print!("{}", report.render());
    eprintln!("analysis written to {}", dir.display());
    Ok(if report.passed { 0 } else { 1 })
}

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, report: &AnalysisReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.txt"), report.render())?;

    let constants = spectral_constants(cfg.h, &cfg.matrix)?;
    io::write_constants_csv(&dir.join("constants.csv"), &constants)?;

    let mut trajectory = String::from("beta,overlap_linf,overlap_l2\n");
    for p in &report.overlap_trajectory {
        trajectory.push_str(&format!(
            "{},{},{}\n",
            io::fmt_g17(p.beta),
            io::fmt_g17(p.linf),
            io::fmt_g17(p.l2)
        ));
    }
    std::fs::write(dir.join("overlap.csv"), trajectory)?;

    for curve in &report.curves {
        let name = format!("curve_{}_{}.csv", curve.species.0, curve.species.1);
        io::write_curve_csv(&dir.join(name), curve)?;
    }
    io::write_multiplicity_pgm(&dir.join("multiplicity.pgm"), &report.multiplicity)?;
    Ok(())
}
