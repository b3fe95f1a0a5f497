//! Error taxonomy shared by all modules.
//!
//! Validation failures (bad parameters, malformed files) are kept separate
//! from numerical failures (non-convergence, lost positivity) so the CLI can
//! map them to distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// A precondition on an input parameter was violated.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// P is not safely invertible: its smallest eigenvalue is at or below the
    /// singularity tolerance.
    #[error("singular P: min eigenvalue {min_eig:.3e} <= tolerance {tol:.3e}")]
    SingularP { min_eig: f64, tol: f64 },

    /// The dense eigensolver did not converge.
    #[error("eigensolver failed to converge after {sweeps} sweeps (dim {dim})")]
    ConvergenceFailure { dim: usize, sweeps: usize },

    /// The block matrix M is numerically non-diagonalizable; the eigenmode
    /// expansion is not available.
    #[error("defective M: eigenvector matrix condition number {cond:.3e} exceeds {limit:.3e}")]
    DefectiveM { cond: f64, limit: f64 },

    /// The assembled potential is not strongly omega_0-plurisubharmonic.
    #[error("potential not strongly psh: margin {margin:.3e} <= 0 (epsilon {epsilon})")]
    NotPsh { margin: f64, epsilon: f64 },

    /// The unit coordinate ball around the chosen fixed point does not fit in
    /// the fundamental domain.
    #[error("unit ball does not fit: period {period} requires L/2 > {radius}")]
    BallDoesNotFit { period: f64, radius: f64 },

    /// Halving epsilon never produced the requested psh margin.
    #[error("no epsilon found after {halvings} halvings (last margin {last_margin:.3e})")]
    NoEpsilonFound { halvings: usize, last_margin: f64 },

    /// Newton iteration stalled above tolerance.
    #[error("no convergence: residual {residual:.3e} after {iterations} iterations (epsilon {epsilon})")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        epsilon: f64,
    },

    /// No admissible Newton step preserves fiberwise positivity.
    #[error("positivity loss: no step length preserves 1 + u_zz̄ > 0")]
    PositivityLoss,

    /// A metric coefficient matrix is not positive definite.
    #[error("degenerate metric: min eigenvalue {min_eig:.3e} <= tolerance {tol:.3e}")]
    DegenerateMetric { min_eig: f64, tol: f64 },

    /// A traced leaf left the coordinate chart.
    #[error("leaf left the chart at s = {re}+{im}i (|f| = {dist:.3})")]
    LeftChart { re: f64, im: f64, dist: f64 },

    /// The fiber block of the coefficient matrix is numerically singular.
    #[error("singular fiber block along leaf (min |eig| {min_abs:.3e})")]
    SingularFiberBlock { min_abs: f64 },

    /// A randomized property suite observed counterexamples.
    #[error("property violated: {what} ({count} cases)")]
    PropertyViolated { what: &'static str, count: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that indicate bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::InvalidParameter { .. } | LabError::Io(_) | LabError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
