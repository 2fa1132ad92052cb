use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point lies outside the domain of the regularizer ({0})")]
    OutsideDomain(String),

    #[error("interpolation directions are singular (condition number {cond:.3e})")]
    SingularDirections { cond: f64 },

    #[error("residual evaluation failed: {0}")]
    Evaluation(String),

    #[error("evaluation budget exhausted")]
    BudgetExhausted,

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("regularizer has zero Lipschitz constant; use the unsmoothed solver")]
    SmoothingUnavailable,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty record set")]
    EmptyRecords,

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
