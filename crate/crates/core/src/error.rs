use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("atom weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("invalid offspring pmf: {0}")]
    Pmf(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error("cap exceeded: {0}")]
    Cap(String),
    #[error("count overflow at t={t}: {what}")]
    Overflow { t: u64, what: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Numeric aborts (overflow, caps) as opposed to bad input.
    pub fn is_numeric_abort(&self) -> bool {
        matches!(self, Error::Overflow { .. } | Error::Cap(_))
    }
}
