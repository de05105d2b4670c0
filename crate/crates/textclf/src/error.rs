use std::path::Path;
use std::process::ExitCode;

use textclf_core::corpus::CorpusError;
use textclf_core::metrics::MetricsError;
use textclf_core::tensor::CheckpointError;
use textclf_core::train::TrainError;
use textclf_core::zoo::ZooError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags or configuration: exit 2.
    Usage,
    /// Missing, malformed or incompatible input files: exit 3.
    Data,
    /// Training diverged: exit 4.
    Numerical,
    /// Anything else, such as an unwritable output directory: exit 1.
    Other,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Other => 1,
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Other, message)
    }

    /// An error reading an input file.
    pub fn read(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::data(format!("{}: {err}", path.display()))
    }

    /// An error writing an output file.
    pub fn write(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::other(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with `path`, keeping the kind.
    pub fn at(self, path: &Path) -> Self {
        Self::new(self.kind, format!("{}: {}", path.display(), self.message))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.exit_code())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<ZooError> for CliError {
    fn from(e: ZooError) -> Self {
        match e {
            ZooError::UnknownModel(_) | ZooError::Hyperparameter(_) | ZooError::Plan { .. } => {
                Self::usage(e.to_string())
            }
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => Self::new(ErrorKind::Numerical, e.to_string()),
            TrainError::Config(_) => Self::usage(e.to_string()),
            TrainError::Zoo(z) => z.into(),
            TrainError::Sink(_) => Self::other(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let kinds = [
            ErrorKind::Usage,
            ErrorKind::Data,
            ErrorKind::Numerical,
            ErrorKind::Other,
        ];
        let mut codes: Vec<u8> = kinds.iter().map(|k| k.exit_code()).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), 4);
        assert!(!codes.contains(&0));
    }

    #[test]
    fn divergence_is_numerical() {
        let e: CliError = TrainError::NonFinite { epoch: 2, batch: 7 }.into();
        assert_eq!(e.kind, ErrorKind::Numerical);
        let e: CliError = ZooError::UnknownModel("z".into()).into();
        assert_eq!(e.kind, ErrorKind::Usage);
        let e: CliError = MetricsError::SingleClass.into();
        assert!(e.to_string().contains("AUC undefined"));
    }
}
