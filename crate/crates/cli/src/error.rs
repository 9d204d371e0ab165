use std::fmt;
use std::process::ExitCode;

use lorenc_core::container::ContainerError;

/// Process outcome classes, each with a fixed exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    AssertionFailed = 1,
    Usage = 2,
    MissingArtifact = 3,
    CorruptArtifact = 4,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    status: Status,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            status: Status::Usage,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self {
            status: Status::MissingArtifact,
            message: message.into(),
        }
    }

    pub fn corrupt(message: impl Into<String>) -> Self {
        Self {
            status: Status::CorruptArtifact,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> Status {
        self.status
    }

    /// Classifies a container failure while handling the artifact at `path`.
    pub fn from_container(path: &str, err: ContainerError) -> Self {
        let message = format!("{path}: {err}");
        match err {
            ContainerError::Io(_) | ContainerError::MissingTensor(_) => Self::missing(message),
            // malformed bytes, or stored tensors that fail pipeline validation
            _ => Self::corrupt(message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
