use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] odml::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

#[derive(Debug, Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use odml::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::CheckFailed(_) => 4,
            CliError::Core(e) => match e {
                E::InvalidInput(_) => 1,
                E::Parse { .. } | E::InvalidDataset(_) | E::EmptySelection | E::InvalidBatch(_) | E::Io(_) => 2,
                E::DegenerateMeans(_) => 2,
                E::NumericalFailure(_) | E::DomainError(_) | E::NotPsd { .. } | E::Singular(_) => 3,
                E::BoundInapplicable(_) => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::CheckFailed(_) => "CheckFailed",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn to_json(&self) -> String {
        let body = ErrorJson { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() };
        serde_json::to_string(&body).expect("error serializes")
    }
}
