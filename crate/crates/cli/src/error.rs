use std::fmt;
use std::path::Path;

use afe_core::AfeError;

/// Process exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Config = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Config,
            message: message.into(),
        }
    }

    pub fn write(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("cannot write {}: {e}", path.display()))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<AfeError> for CliError {
    fn from(e: AfeError) -> Self {
        let kind = match &e {
            AfeError::Usage(_) => ExitKind::Usage,
            AfeError::Config(_) | AfeError::Tensor(_) => ExitKind::Config,
            AfeError::Parse { .. }
            | AfeError::EmptyBody(_)
            | AfeError::Sequence(_)
            | AfeError::Topology(_)
            | AfeError::Checkpoint(_)
            | AfeError::Io { .. } => ExitKind::Data,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(CliError::from(AfeError::Usage("x".into())).code(), 1);
        assert_eq!(CliError::from(AfeError::Checkpoint("x".into())).code(), 2);
        assert_eq!(CliError::from(AfeError::Config("x".into())).code(), 3);
        assert_eq!(CliError::data("x").code(), 2);
    }
}
