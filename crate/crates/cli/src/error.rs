//! Error-to-exit-code mapping. 0 success, 1 usage/config, 2 data, 3
//! internal; diagnostics go to stderr.

use flowsift_core::evaluation::EvalError;
use flowsift_core::ingest::IngestError;
use flowsift_core::model::ModelError;
use flowsift_core::ppfle::PpfleError;
use flowsift_core::tokenizer::TokenizerError;
use flowsift_core::training::TrainError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::SchemaInvalid { .. } | IngestError::BadRatio { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PpfleError> for CliError {
    fn from(e: PpfleError) -> Self {
        match e {
            PpfleError::BadTruncation { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadConfig { .. } => CliError::Usage(e.to_string()),
            ModelError::VersionMismatch { .. }
            | ModelError::CorruptCheckpoint { .. }
            | ModelError::Io { .. }
            | ModelError::IdOutOfRange { .. }
            | ModelError::SequenceTooLong { .. } => CliError::Data(e.to_string()),
            ModelError::ShapeMismatch { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::BadLabel { .. } => CliError::Data(e.to_string()),
            TrainError::NonFiniteLoss { .. } => CliError::Internal(e.to_string()),
            TrainError::Model(m) => m.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
