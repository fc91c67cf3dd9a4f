use alloc::string::String;

/// Failure categories shared by every operation in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Too few (usable) samples or coincidences to form the statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// The model or run configuration is unusable as given.
    #[error("configuration error: {0}")]
    Config(String),
    /// A documented precondition (assumption flag, parameter range) does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A memory or particle cap was exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
    /// The requested object has not been materialized.
    #[error("state error: {0}")]
    State(String),
    /// An iteration limit was hit before the stopping condition.
    #[error("truncated after {steps} steps: {what}")]
    Truncated { steps: u64, what: String },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
