use thiserror::Error;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status when `--assert` detects a contract violation.
pub const EXIT_ASSERT: i32 = 2;
/// Exit status for a malformed invocation or configuration.
pub const EXIT_USAGE: i32 = 64;
/// Exit status when the oracle or an estimator fails.
pub const EXIT_SOFTWARE: i32 = 70;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] gibbs_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            // Precondition failures and refusals stem from the inputs the user chose.
            HarnessError::Usage(_) | HarnessError::Core(gibbs_core::Error::Domain(_) | gibbs_core::Error::Refused(_)) => {
                EXIT_USAGE
            }
            _ => EXIT_SOFTWARE,
        }
    }
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Usage(msg.into()))
}
