use std::process::ExitCode;

use prufer_core::{CodecError, CoupledError, EnumerationError, SimError, TreeError};

#[derive(Debug)]
pub enum CliError {
    /// Bad flag values or combinations.
    Usage(String),
    /// Enumeration beyond the cap.
    Infeasible(String),
    /// Input files or strings that do not parse or validate.
    Data(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Data(_) => 4,
            CliError::Io(_) => 1,
        })
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Data(m) | CliError::Io(m) => m,
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CoupledError> for CliError {
    fn from(e: CoupledError) -> Self {
        match e {
            CoupledError::InvalidPair(m) => CliError::Usage(m),
            other => CliError::Io(format!("internal error: {other}")),
        }
    }
}

impl From<EnumerationError> for CliError {
    fn from(e: EnumerationError) -> Self {
        match e {
            EnumerationError::TooLarge { .. } => CliError::Infeasible(e.to_string()),
            EnumerationError::TooSmall(_) | EnumerationError::InvalidMu { .. } => {
                CliError::Usage(e.to_string())
            }
            EnumerationError::Coupled(c) => c.into(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(m) => CliError::Usage(m),
            SimError::Coupled(c) => c.into(),
        }
    }
}
