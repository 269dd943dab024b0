use num_complex::Complex64;
use thiserror::Error;

/// Errors produced by the vortex library.
#[derive(Debug, Error)]
pub enum VortexError {
    #[error("point ({}, {}) lies outside the domain", .0.re, .0.im)]
    OutsideDomain(Complex64),

    #[error("conformal map inversion did not converge for ({}, {}) after {iterations} iterations", .point.re, .point.im)]
    MapInversion { point: Complex64, iterations: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("vortices {0} and {1} coincide")]
    Collision(usize, usize),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("guard violation at t = {time}: {detail}")]
    GuardViolation { time: f64, detail: String },

    #[error("implicit midpoint solve diverged at t = {time} (increment {increment:e})")]
    InnerSolveDivergence { time: f64, increment: f64 },

    #[error("loop leaves the collision-free symmetric set (minimal separation {0:e})")]
    SymmetryCollision(f64),

    #[error("inadmissible reduced point: {0}")]
    Inadmissible(String),

    #[error("normal correction did not converge: residual {residual:e} after {iterations} iterations")]
    CorrectionNonConvergence {
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("reduced Newton did not converge: |grad psi| = {gradient:e} after {iterations} iterations")]
    ReducedNonConvergence {
        gradient: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("full gradient check failed: |grad Psi| = {norm:e} exceeds {limit:e}")]
    FullGradientCheck { norm: f64, limit: f64 },

    #[error("orbit verification failed: {0}")]
    VerificationFailed(String),

    #[error("operation requires a bounded domain")]
    UnboundedDomain,

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VortexError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            VortexError::GuardViolation { .. } | VortexError::InnerSolveDivergence { .. } => 2,
            VortexError::CorrectionNonConvergence { .. }
            | VortexError::ReducedNonConvergence { .. }
            | VortexError::FullGradientCheck { .. }
            | VortexError::VerificationFailed(_)
            | VortexError::Inadmissible(_)
            | VortexError::SymmetryCollision(_)
            | VortexError::MapInversion { .. } => 3,
            _ => 1,
        }
    }

    /// Residual history attached to solver failures, if any.
    pub fn history(&self) -> Option<&[f64]> {
        match self {
            VortexError::CorrectionNonConvergence { history, .. }
            | VortexError::ReducedNonConvergence { history, .. } => Some(history),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, VortexError>;
