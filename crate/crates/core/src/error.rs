use thiserror::Error;

/// Errors raised by the estimators and their oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// A randomized loop ran out of retries.
    #[error("gave up after {0} attempts")]
    GiveUp(usize),
    /// The oracle refused a draw because its draw budget is spent.
    #[error("oracle budget exhausted after {0} draws")]
    BudgetExhausted(u64),
    /// A dovetailed branch was stopped because the other branch won.
    #[error("branch cancelled")]
    Cancelled,
    /// An input is larger than an exhaustive routine is willing to handle.
    #[error("refused: {0}")]
    Refused(String),
    /// The sampling backend failed.
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
