use thiserror::Error;

/// Errors raised by the MLP engine, the heat scheme and the reference oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A nonlinearity, terminal condition or dynamics map returned NaN or ±∞.
    #[error("non-finite value at t = {t}, x = {x:?}, v = {v}")]
    EvaluationFault { t: f64, x: Vec<f64>, v: f64 },

    #[error("dynamics map at level {level} returned a non-finite element")]
    NonFiniteDynamics { level: u64 },

    #[error("Picard iteration is not contracting (gap grew for {0} consecutive iterations)")]
    NonContraction(usize),

    #[error("estimated draw count {estimated} exceeds the configured cap {cap}")]
    BudgetExceeded { estimated: f64, cap: f64 },

    #[error("no closed-form reference registered for problem `{0}`")]
    UnknownProblem(String),

    #[error("non-finite moment estimate: {0}")]
    NonFiniteMoment(String),
}

pub type Result<T> = std::result::Result<T, MlpError>;
