use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] msmae::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 0 ok, 1 other, 2 config, 3 numeric, 4 checkpoint mismatch.
    pub fn exit_code(&self) -> i32 {
        use msmae::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::DegenerateMask { .. }) => 2,
            CliError::Core(E::NonFinite { .. }) => 3,
            CliError::Core(E::CheckpointMismatch { .. }) => 4,
            _ => 1,
        }
    }
}
