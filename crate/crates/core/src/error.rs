use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("query filter selects no examples")]
    EmptySelection,
    #[error("class means are degenerate: {0}")]
    DegenerateMeans(String),
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::DomainError(_) => "DomainError",
            Error::NotPsd { .. } => "NotPSD",
            Error::Singular(_) => "Singular",
            Error::InvalidBatch(_) => "InvalidBatch",
            Error::Parse { .. } => "ParseError",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::EmptySelection => "EmptySelection",
            Error::DegenerateMeans(_) => "DegenerateMeans",
            Error::BoundInapplicable(_) => "BoundInapplicable",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
