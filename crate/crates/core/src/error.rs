use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point ({x}, {y}) is outside the punctured unit disk")]
    OutsideDisk { x: f64, y: f64 },

    #[error("invalid trace specification: {0}")]
    InvalidTrace(String),

    #[error("degenerate trace zero at theta = {theta:.6}: slope {slope:.3e} below {min_slope:.3e}")]
    DegenerateTrace { theta: f64, slope: f64, min_slope: f64 },

    #[error("invalid competition matrix: {0}")]
    InvalidMatrix(String),

    #[error("linear solve exceeded {max_iter} iterations (residual {residual:.3e}, target {target:.3e})")]
    LinearSolveStalled { max_iter: usize, residual: f64, target: f64 },

    #[error("relaxation did not reach defect {target:.3e} at beta = {beta:.3e} (best {best:.3e} after {sweeps} sweeps)")]
    SolverNotConverged { beta: f64, best: f64, target: f64, sweeps: usize },

    #[error("row y = {y:.4} is not 2π-periodic (seam jump {ratio:.2} times the in-row variation)")]
    NonPeriodicRow { y: f64, ratio: f64 },

    #[error("nodal curve for pair ({i}, {j}) has {found} points in the fit window, need {need}")]
    CurveTooShort { i: usize, j: usize, found: usize, need: usize },

    #[error("expected {expected} curve crossings at y = {y:.3}, found {found}")]
    IncompleteCrossings { y: f64, expected: usize, found: usize },

    #[error("fit window [{lo:.3}, {hi:.3}] left {rows} usable rows, need {need}")]
    WindowTooSmall { lo: f64, hi: f64, rows: usize, need: usize },

    #[error("{path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },

    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },

    #[error("analysis failure: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 analysis failure, 2 bad config,
    /// 3 solver non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidGrid(_) | Error::InvalidTrace(_)
            | Error::InvalidMatrix(_) => 2,
            Error::SolverNotConverged { .. } | Error::LinearSolveStalled { .. } => 3,
            _ => 1,
        }
    }
}
