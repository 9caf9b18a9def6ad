use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Raised before any allocation when an exhaustive computation would
    /// exceed the configured path/particle budget.
    #[error("enumeration budget exceeded: estimated {estimated} > budget {budget}")]
    BudgetExceeded { estimated: u128, budget: u128 },

    #[error("agent state {to} is unreachable from {from}; diameter undefined")]
    Unreachable { from: usize, to: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("window not decodable: {0}")]
    NotDecodable(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("partition domains differ: {0}")]
    DomainMismatch(String),

    #[error("agent dynamics are not deterministic at state {state}, action {action}")]
    NonDeterministic { state: usize, action: usize },

    #[error("policy depends on the exogenous state at agent state {state}")]
    NonEndogenousPolicy { state: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
