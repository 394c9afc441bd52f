use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("region has {count} samples, above the cap of {cap}")]
    RegionTooLarge { count: u128, cap: u128 },

    #[error("load current magnitude {magnitude:.3e} is below the singular-load guard {i_min:.1e}")]
    SingularLoad { magnitude: f64, i_min: f64 },

    #[error("network is ill-posed: A_I + M_Y A_V is singular or badly conditioned (cond = {cond:.3e})")]
    IllPosedNetwork { cond: f64 },

    #[error("storage matrix is not positive definite (lambda_min = {lambda_min:.3e})")]
    InvalidStorage { lambda_min: f64 },

    #[error("algebraic Jacobian dg/du is singular at the current point")]
    SingularAlgebraicJacobian,

    #[error("no consistent algebraic solution: residual {residual:.3e} after {iterations} iterations")]
    NoConsistentAlgebraic { residual: f64, iterations: usize },

    #[error("no equilibrium reached from seed: residual {residual:.3e} after {iterations} iterations")]
    NoEquilibrium { residual: f64, iterations: usize },

    #[error("level estimation grid too small: {0}")]
    GridTooSmall(String),

    #[error("{0}")]
    Config(String),
}
