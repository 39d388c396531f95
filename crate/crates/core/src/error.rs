use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("seminorm order must be >= 1, got {0}")]
    InvalidOrder(f64),

    #[error("no period found within the window (window too small or pattern not periodic)")]
    NoPeriodInWindow,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("geometry violation: {0}")]
    GeometryViolation(String),

    #[error("epsilon {epsilon} does not tile the domain with pore period {period:?}")]
    EpsilonNotConforming { epsilon: f64, period: Vec<usize> },

    #[error("coefficient fails coercivity: {0}")]
    CoercivityViolation(String),

    #[error("phase error: {0}")]
    PhaseError(String),

    #[error("{solver} stalled at relative residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("history length {have} does not cover step {want}")]
    HistoryError { have: usize, want: usize },

    #[error("time step {dt} under-resolves the fast-time kernel (need dt <= {limit})")]
    TimeStepUnresolved { dt: f64, limit: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
