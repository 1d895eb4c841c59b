use adaflow_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for invalid configurations, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core(e) if is_config_error(e) => 2,
            Self::Core(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

fn is_config_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Config(_)
            | CoreError::StepsizeConstraint(_)
            | CoreError::UnsupportedNoise(_)
            | CoreError::MissingHessian(_)
            | CoreError::Dimension { .. }
            | CoreError::StepGuard { .. }
    )
}
