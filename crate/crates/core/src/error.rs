use thiserror::Error;

use crate::continuation::Branch;
use crate::evolution::Trajectory;
use crate::model::SteadyState;

pub type Result<T> = std::result::Result<T, SktError>;

#[derive(Debug, Error)]
pub enum SktError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error(
        "newton iteration did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    Divergence {
        iterations: usize,
        residual: f64,
        last_iterate: Box<SteadyState>,
    },

    /// Near-zero pivot or tiny reciprocal condition estimate; close to a
    /// bifurcation point when it comes from a steady-state Jacobian.
    #[error("singular linear system (reciprocal condition estimate {rcond:.3e})")]
    Singular { rcond: f64 },

    #[error("eigenvalue iteration failed: {0}")]
    Spectral(String),

    #[error("nonlinear solver failed: {0}")]
    Solver(String),

    #[error("converged profile has {found} sign changes, expected {expected}")]
    WrongClass { expected: usize, found: usize },

    #[error("limiting decomposition mismatch at eigenvalue {eigenvalue}: {detail}")]
    Decomposition { eigenvalue: f64, detail: String },

    /// Carries the points computed before the stall.
    #[error("continuation stalled at lambda = {lambda:.6} (step {step:.3e} below minimum)")]
    Stall {
        lambda: f64,
        step: f64,
        partial: Box<Branch>,
    },

    #[error("branch switch fell back onto the parent branch (distance {distance:.3e}); try a larger amplitude or offset")]
    NoSwitch { distance: f64 },

    #[error("segregation measure undefined for the zero state")]
    UndefinedMeasure,

    #[error("solution blew up at t = {time:.6} (norm {norm:.3e})")]
    BlowUp {
        time: f64,
        norm: f64,
        partial: Box<Trajectory>,
    },

    #[error("growth-rate estimate needs at least {needed} samples in the window, found {found}")]
    Estimation { needed: usize, found: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SktError {
    /// Process exit status for the command-line tool: 2 for a stalled
    /// continuation, 3 for invalid configuration or input, 4 for any other
    /// numerical or I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SktError::Stall { .. } => 2,
            SktError::Config(_) | SktError::Input(_) | SktError::Parse { .. } => 3,
            _ => 4,
        }
    }
}
