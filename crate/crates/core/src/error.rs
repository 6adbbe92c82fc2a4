//! Error type shared by every module of the laboratory.

use thiserror::Error;

/// Everything that can go wrong while building fields, solving, or reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("density must be strictly positive (min = {min})")]
    NonPositiveDensity { min: f64 },

    #[error("operator is singular and the right-hand side is incompatible (functional = {functional:e})")]
    SingularOperator { functional: f64 },

    #[error("linear solver stalled at relative residual {residual:e}")]
    NoConvergence { residual: f64 },

    #[error("numerical kernel is degenerate: {0}")]
    DegenerateKernel(String),

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("integral of g against the eccentricity must be negative, got {value:e}")]
    StarViolated { value: f64 },

    #[error("input field is constant")]
    ConstantInput,

    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("Newton iteration diverged at continuation parameter t = {t}")]
    NewtonDiverged { t: f64 },

    #[error("Jacobian became singular at t = {t}")]
    JacobianSingular { t: f64 },

    #[error("g has no negative part (min g = {min_g})")]
    NoNegativePart { min_g: f64 },

    #[error("g must be non-positive and not identically zero: {0}")]
    WrongSignClass(String),

    #[error("sub/supersolution ordering violated: {0}")]
    OrderingViolated(String),

    #[error("iteration limit reached after {iterations} steps (residual {residual:e})")]
    MaxIters { iterations: usize, residual: f64 },

    #[error("line search failed to decrease the energy")]
    LineSearchFailed,

    #[error("bisection failed: {0}")]
    BisectionFailed(String),

    #[error("multiplier must be negative, got {0}")]
    NonNegativeMultiplier(f64),

    #[error("mode {kvec:?} is not resolved on an N = {n_pts} grid")]
    UnresolvedMode { kvec: Vec<i64>, n_pts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
