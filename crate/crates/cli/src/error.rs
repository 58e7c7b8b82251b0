use figs::FigsError;

/// Exit code for malformed input: schema, flags, files.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for failures during fitting or evaluation.
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<FigsError> for CliError {
    fn from(e: FigsError) -> Self {
        let msg = e.to_string();
        match e {
            FigsError::NonFinite(_)
            | FigsError::StaleLeaves
            | FigsError::Singular(_)
            | FigsError::InvalidSplit(_) => CliError::Compute(msg),
            _ => CliError::Input(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Tags an error from a fit or evaluation call as a compute failure unless
/// it is plainly an input problem.
pub(crate) fn compute(e: FigsError) -> CliError {
    match e {
        FigsError::Json(_) | FigsError::Csv(_) | FigsError::Io(_) | FigsError::UnknownGroup(_) => e.into(),
        FigsError::DimensionMismatch { .. } => e.into(),
        other => CliError::Compute(other.to_string()),
    }
}
