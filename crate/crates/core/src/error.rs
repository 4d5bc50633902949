use thiserror::Error;

/// A single violated bound found during configuration validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub bound: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} violated", self.field, self.bound)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty trace: at least one sample is required")]
    EmptyTrace,

    #[error("root bracket failure: statistic has no sign change on [{low}, {high}]")]
    Bracket { low: f64, high: f64 },

    #[error("loop classes are indistinguishable: {0}")]
    DegenerateLevels(String),

    #[error("defense modes conflict: {0}")]
    DefenseConflict(String),

    #[error("no attack records to estimate from")]
    EmptyRecords,

    #[error("attack records mix different attacks")]
    MixedAttacks,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than the runtime.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Domain(_)
                | Error::DegenerateLevels(_)
                | Error::DefenseConflict(_)
        )
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
