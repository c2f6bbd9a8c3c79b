use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fontpair::Error),
    #[error("no {} in {}", fontpair::evaluator::REPORT_FILE, .0.display())]
    MissingReport(PathBuf),
    #[error("config file {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error("{0}")]
    InvalidArgument(String),
}

impl CliError {
    /// Module-prefixed, machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::MissingReport(_) => "cli.missing_report",
            CliError::Config { .. } => "cli.invalid_config",
            CliError::InvalidArgument(_) => "cli.invalid_argument",
        }
    }
}
