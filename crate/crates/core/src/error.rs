use thiserror::Error;

/// Errors raised anywhere in the orbit pipeline.
#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("kinetic matrix not positive definite at x = ({x1:.6}, {x2:.6}): smallest eigenvalue {min_eig:.3e}")]
    NotPositiveDefinite { x1: f64, x2: f64, min_eig: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),

    #[error("energy drift {drift:.3e} exceeds tolerance {tolerance:.3e} after {steps} steps")]
    EnergyDriftExceeded {
        drift: f64,
        tolerance: f64,
        steps: usize,
    },

    #[error("orbit does not close: mismatch {0:.3e}")]
    NotClosed(f64),

    #[error("no real root of the energy equation at x1 = {x1:.6}, y1 = {y1:.6}, tau = {tau:.6}")]
    OutsideEnergyShell { x1: f64, y1: f64, tau: f64 },

    #[error("branch condition dH/dy2 > 0 violated (dH/dy2 = {0:.3e})")]
    BranchViolation(f64),

    #[error("momentum solve failed for velocity {xdot:.6}: {reason}")]
    MomentumSolveFailure { xdot: f64, reason: String },

    #[error("sub-arc boundary value problem did not converge: {0}")]
    BvpNonConvergence(String),

    #[error("arc leaves the strip at x1 = {0:.6}")]
    StripExit(f64),

    #[error("eigensolver failure: {0}")]
    EigenFailure(String),

    #[error("no minimum found: {0}")]
    NoMinimumFound(String),

    #[error("variational and Floquet verdicts disagree: {0}")]
    CriterionDisagreement(String),

    #[error("continuation step failed at E = {energy:.8}: {reason}")]
    StepFailure { energy: f64, reason: String },

    #[error("cold-start audit at E = {energy:.8} found a global minimum at x = {x:.8} not explained by any branch")]
    AuditMismatch { energy: f64, x: f64 },

    #[error("minimizer of F({0:.6}) is not unique")]
    NonUniqueMinimizer(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OrbitError>;
