use crate::lattice::Point;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KrwError {
    #[error("relaxation did not converge: residual {residual:.3e} after {sweeps} sweeps")]
    SolverDiverged { residual: f64, sweeps: u64 },

    #[error("computational domain is empty")]
    EmptyDomain,

    #[error("escape probability underflows at {point} (value {value:.3e})")]
    Underflow { point: Point, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nonpositive harmonic weight at {0}")]
    NonpositiveWeight(Point),

    #[error("conditioned kernel row at {point} has mass {mass:.3e} below 1e-12")]
    DeadRow { point: Point, mass: f64 },

    #[error("bush rejection sampling stalled at {0} (acceptance below 1e-6)")]
    RejectionStall(Point),

    #[error("experiment degenerate: {0}")]
    Degenerate(String),

    #[error("winding step exceeded pi/2 in {0} of {1} contributing paths")]
    WindingViolation(usize, usize),
}

pub type Result<T> = std::result::Result<T, KrwError>;
