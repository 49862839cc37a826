use thiserror::Error;

pub type Result<T> = std::result::Result<T, FrdError>;

#[derive(Debug, Error)]
pub enum FrdError {
    #[error("invalid torus: {0}")]
    InvalidTorus(String),
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("multi-index order {order} exceeds cap {cap}")]
    MultiIndexCap { order: usize, cap: usize },
    #[error("cube side {side} outside [1, {max}]")]
    CubeSide { side: usize, max: usize },
    #[error("fields live on different tori")]
    TorusMismatch,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coefficient field is not elliptic (c0 = {c0:e})")]
    NotElliptic { c0: f64 },
    #[error("coefficient field is not symmetric (residual {residual:e})")]
    NotSymmetric { residual: f64 },
    #[error("perturbation norm {norm:e} exceeds declared budget {budget:e}")]
    BudgetExceeded { norm: f64, budget: f64 },
    #[error("field is not mean-zero (deviation {deviation:e})")]
    NotMeanZero { deviation: f64 },
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid decomposition plan: {0}")]
    InvalidPlan(String),
    #[error("level {k} out of range 1..={max}")]
    LevelOutOfRange { k: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("size limit exceeded: {sites} sites > {limit}")]
    SizeLimit { sites: usize, limit: usize },
    #[error("level {level} is not positive semidefinite (smallest eigenvalue {min_eig:e})")]
    NotPositive { level: usize, min_eig: f64 },
    #[error("function is not A-harmonic on the cube (residual {residual:e})")]
    NotHarmonic { residual: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("archive integrity error: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FrdError {
    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            FrdError::InvalidTorus(_) => "invalid_torus",
            FrdError::AxisOutOfRange { .. } => "axis_out_of_range",
            FrdError::MultiIndexCap { .. } => "multi_index_cap",
            FrdError::CubeSide { .. } => "cube_side",
            FrdError::TorusMismatch => "torus_mismatch",
            FrdError::LengthMismatch { .. } => "length_mismatch",
            FrdError::NotElliptic { .. } => "not_elliptic",
            FrdError::NotSymmetric { .. } => "not_symmetric",
            FrdError::BudgetExceeded { .. } => "budget_exceeded",
            FrdError::NotMeanZero { .. } => "not_mean_zero",
            FrdError::NoConvergence { .. } => "no_convergence",
            FrdError::InvalidPlan(_) => "invalid_plan",
            FrdError::LevelOutOfRange { .. } => "level_out_of_range",
            FrdError::InvalidParameter(_) => "invalid_parameter",
            FrdError::SizeLimit { .. } => "size_limit",
            FrdError::NotPositive { .. } => "not_positive",
            FrdError::NotHarmonic { .. } => "not_harmonic",
            FrdError::Config(_) => "config",
            FrdError::Integrity(_) => "integrity",
            FrdError::Io(_) => "io",
            FrdError::Json(_) => "json",
        }
    }
}
