use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Each variant maps onto a CLI exit code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),

    #[error("no bounded primitive: B = {0} and the loop class is non-trivial")]
    UnboundedPrimitive(f64),

    #[error("non-finite model data or quadrature value")]
    NonFinite,

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("flowed to a critical point at infinity: T = {period:.3e}, S = {action:.3e}")]
    Collapse { period: f64, action: f64 },

    #[error("degenerate critical point: nullity {0}")]
    Degenerate(usize),

    #[error("refine grid: {0}")]
    RefineGrid(String),

    #[error("step size underflow at flow time {0:.6}")]
    StepUnderflow(f64),

    #[error("energy level {0} is empty or not regular")]
    BadLevel(f64),

    #[error("level not virtually contact for the chosen primitive (delta = {0:.3e})")]
    NotContact(f64),

    #[error("truncation radius {radius} too small (needs > {required})")]
    RadiusTooSmall { radius: f64, required: f64 },

    #[error("unit-eigenvalue block has dimension {0}, expected 2")]
    UnitBlock(usize),

    #[error("symplectic defect {0:.3e} exceeds tolerance")]
    SymplecticDefect(f64),

    #[error("configuration not in the non-degenerate regime: {0}")]
    NotRegular(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::DimensionMismatch { .. } | Error::NotRegular(_) => 2,
            Error::NoConvergence { .. }
            | Error::Collapse { .. }
            | Error::StepUnderflow(_)
            | Error::RefineGrid(_)
            | Error::LinearSolve(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
