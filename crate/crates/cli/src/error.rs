use hermiton::integrate::ModelTier;
use hermiton::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: Error,
    },

    #[error("NoOracleForTier: no exact solution is available for the {0} tier")]
    NoOracleForTier(&'static str),

    #[error("{0} invariant check(s) failed")]
    ChecksFailed(usize),

    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    /// A core error raised while validating a scenario field.
    pub fn field(what: &str, source: Error) -> Self {
        Self::Core { context: what.to_string(), source }
    }

    /// A core error raised while evaluating the equations of `tier`.
    pub fn tier(tier: ModelTier, source: Error) -> Self {
        Self::Core { context: format!("{} tier", tier.name()), source }
    }

    /// 2 for invalid input, 3 when time stepping failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::NoOracleForTier(_) => 2,
            Self::Core { source: Error::StepFailure { .. }, .. } => 3,
            Self::Core { .. } => 2,
            Self::ChecksFailed(_) | Self::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}
