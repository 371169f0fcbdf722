use std::fmt;

/// Errors surfaced by the command-line driver, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad arguments, configuration or input files (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Configuration failed validation (exit 1).
    #[error("invalid configuration:\n{}", Diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    /// Numerical failure in the estimation pipeline (exit 2).
    #[error(transparent)]
    Numerical(#[from] scle_core::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Invalid(_) => 1,
            AppError::Numerical(_) => 2,
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Usage(e.to_string())
    }
}

/// One configuration problem, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

struct Diagnostics<'a>(&'a [Diagnostic]);

impl fmt::Display for Diagnostics<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {d}")?;
        }
        Ok(())
    }
}

pub type AppResult<T> = Result<T, AppError>;
