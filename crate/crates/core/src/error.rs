use thiserror::Error;

/// Errors raised by grid construction, discrete operators and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty impulse set at t={t}, x={x} (H2 violated)")]
    EmptyImpulseSet { t: f64, x: f64 },

    #[error("unknown builtin problem `{0}`")]
    UnknownProblem(String),

    #[error("scheme not applicable: {0}")]
    SchemeInapplicable(String),

    #[error("assembled matrix has non-positive diagonal {value} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("assembled matrix has positive off-diagonal {value} at ({row}, {col})")]
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("assembled matrix is not weakly chained diagonally dominant; rows {rows:?} cannot reach a strictly dominant row")]
    NotWcdd { rows: Vec<usize> },

    #[error("zero pivot in row {row}")]
    SingularPivot { row: usize },

    #[error("iteration did not converge in {iterations} iterations (update history {history:?})")]
    MaxIterations {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("outer iteration stopped at k={k} with increment {increment:e}")]
    OuterIterationLimit { k: usize, increment: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
