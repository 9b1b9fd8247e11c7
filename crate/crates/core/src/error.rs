use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input sequence {indices:?} has no unique limit cycle (monodromy eigenvalue {eigenvalue} is within 1e-9 of 1)")]
    NoUniqueCycle { indices: Vec<usize>, eigenvalue: f64 },

    #[error("no admissible limit cycle of period {period} exists (every sequence violates existence or the state constraints)")]
    NoFeasibleCycle { period: usize },

    #[error("enumeration budget exceeded: {required} > {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("monodromy spectral radius {radius} is not below 1; the cycle input law is not stabilizing")]
    NotStabilizing { radius: f64 },

    #[error("no invariant tube: {0}")]
    NoTube(String),

    #[error("set recursion did not converge within {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last: Box<crate::tube::ErrorTube>,
    },

    #[error("polytope is unbounded")]
    Unbounded,

    #[error("operation unsupported in dimension {0}")]
    UnsupportedDimension(usize),

    #[error("MPC problem is infeasible at k = {k}")]
    Infeasible { k: usize },

    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } => 2,
            Error::NoUniqueCycle { .. }
            | Error::NoFeasibleCycle { .. }
            | Error::NotStabilizing { .. }
            | Error::NoTube(_)
            | Error::NotConverged { .. }
            | Error::Infeasible { .. } => 3,
            _ => 1,
        }
    }
}
