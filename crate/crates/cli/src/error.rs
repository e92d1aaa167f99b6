use std::path::Path;

use nilm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Data {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
    #[error("{0}")]
    Io(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_DATA: i32 = 3;
    pub const EXIT_CHECK: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Data { .. } | CliError::Io(_) => Self::EXIT_DATA,
            CliError::CheckFailed(_) => Self::EXIT_CHECK,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// Attaches the pipeline stage; invalid settings become config errors.
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> Self {
        move |source| match source {
            CoreError::InvalidConfig(_) | CoreError::InvalidTrainConfig(_) | CoreError::InvalidWindow(_) => {
                CliError::Config(format!("{stage}: {source}"))
            }
            source => CliError::Data { stage, source },
        }
    }
}
