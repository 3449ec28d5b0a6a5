use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point {0:?} is not on any boundary surface")]
    NotOnBoundary([f64; 3]),
    #[error("point {0:?} lies outside the solid domain")]
    PointOutsideDomain([f64; 3]),
    #[error("sampling budget infeasible: {0}")]
    BudgetInfeasible(String),
    #[error("degenerate normalization axis {0}: max must exceed min")]
    DegenerateAxis(usize),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("grid resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("conjugate gradient did not converge in {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("supervision budget for {material} ({requested}) exceeds available cells ({available})")]
    BudgetExceedsCells { material: &'static str, requested: usize, available: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty batch for {0} loss")]
    EmptyBatch(&'static str),
    #[error("data loss is enabled but the supervision set is empty")]
    EmptySupervision,
    #[error("all gradients are zero")]
    AllZeroGradients,
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("relative metric undefined: reference field sums to zero")]
    ZeroDenominator,
    #[error("non-finite loss at epoch {epoch}: {breakdown}")]
    NonFiniteLoss { epoch: usize, breakdown: String },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Json(_) | Error::BudgetInfeasible(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::VersionMismatch { .. } | Error::CorruptFile(_) => 2,
            _ => 3,
        }
    }
}
