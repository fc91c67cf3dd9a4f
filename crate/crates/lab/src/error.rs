use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const RESOURCE: i32 = 4;
    pub const ASSERT: i32 = 5;
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] heavybrw::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("assertion failed: {0}")]
    Assert(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => exit::CONFIG,
            LabError::Core(e) => match e {
                heavybrw::Error::Config(_) => exit::CONFIG,
                heavybrw::Error::Precondition(_) | heavybrw::Error::Domain(_) => exit::PRECONDITION,
                heavybrw::Error::Resource(_) | heavybrw::Error::Truncated { .. } => exit::RESOURCE,
                _ => exit::OTHER,
            },
            LabError::Assert(_) => exit::ASSERT,
            _ => exit::OTHER,
        }
    }
}
