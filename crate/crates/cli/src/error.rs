use std::fmt;

use synthseg_core::pipeline::PipelineError;
use synthseg_core::schema::SchemaError;
use synthseg_core::stats::StatsError;
use synthseg_core::synthgen::GenError;
use synthseg_core::trainer::TrainError;
use synthseg_core::volume::nifti::NiftiError;

/// Error classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Format,
    Validation,
    Dependency,
    Training,
    Statistics,
}

impl ErrorClass {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Io => 3,
            ErrorClass::Format => 4,
            ErrorClass::Validation => 5,
            ErrorClass::Dependency => 6,
            ErrorClass::Training => 7,
            ErrorClass::Statistics => 8,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self { class, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Usage, message)
    }

    /// Prefixes the message, typically with the offending path.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self { class: self.class, message: format!("{what}: {}", self.message) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ErrorClass::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(ErrorClass::Format, e.to_string())
    }
}

impl From<NiftiError> for CliError {
    fn from(e: NiftiError) -> Self {
        let class = if matches!(e, NiftiError::Io(_)) { ErrorClass::Io } else { ErrorClass::Format };
        Self::new(class, e.to_string())
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        let class = match e {
            SchemaError::Io(_) => ErrorClass::Io,
            SchemaError::Parse(_) => ErrorClass::Format,
            _ => ErrorClass::Validation,
        };
        Self::new(class, e.to_string())
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        Self::new(ErrorClass::Validation, e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        Self::new(ErrorClass::Statistics, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let class = match &e {
            PipelineError::Io(_) => ErrorClass::Io,
            PipelineError::Json(_) | PipelineError::Weights(_) | PipelineError::Volume(_) | PipelineError::EmptyScan => {
                ErrorClass::Format
            }
            PipelineError::MissingStage(_) => ErrorClass::Dependency,
            PipelineError::Stats(_) => ErrorClass::Statistics,
            PipelineError::Schema(SchemaError::Io(_)) => ErrorClass::Io,
            PipelineError::Schema(SchemaError::Parse(_)) => ErrorClass::Format,
            _ => ErrorClass::Validation,
        };
        Self::new(class, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let class = match &e {
            TrainError::Io(_) => ErrorClass::Io,
            TrainError::Json(_) | TrainError::Weights(_) | TrainError::Checkpoint(_) => ErrorClass::Format,
            TrainError::NonFiniteLoss { .. } => ErrorClass::Training,
            TrainError::Stats(_) => ErrorClass::Statistics,
            _ => ErrorClass::Validation,
        };
        Self::new(class, e.to_string())
    }
}
