use selftrain::ErrorCategory;

/// A failure with the category that picks the process exit code.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub category: ErrorCategory,
    pub message: String,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { category: ErrorCategory::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { category: ErrorCategory::Data, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category {
            ErrorCategory::Config => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Divergence => 3,
        }
    }

    pub fn category_name(&self) -> &'static str {
        match self.category {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Divergence => "divergence",
        }
    }

    /// `error[<category>]: <message>` on one line.
    pub fn one_line(&self) -> String {
        let msg: Vec<&str> = self.message.split_whitespace().collect();
        format!("error[{}]: {}", self.category_name(), msg.join(" "))
    }
}

impl From<selftrain::Error> for CliError {
    fn from(e: selftrain::Error) -> Self {
        CliError { category: e.category(), message: e.to_string() }
    }
}
