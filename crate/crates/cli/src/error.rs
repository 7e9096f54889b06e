use std::fmt;

use insider_forest::error::Category;

/// A failure reported as one `error[<class>]: <message>` line on stderr,
/// with exit code 2 (configuration), 3 (data) or 4 (numeric).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub class: String,
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            class: "ConfigError".into(),
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError {
            class: "IoError".into(),
            code: EXIT_DATA,
            message: format!("{}: {err}", path.display()),
        }
    }

    /// The stderr line, with embedded newlines flattened.
    pub fn line(&self) -> String {
        format!("error[{}]: {}", self.class, self.message.replace(['\n', '\r'], " "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<insider_forest::Error> for CliError {
    fn from(e: insider_forest::Error) -> Self {
        let code = match e.category() {
            Category::Config => EXIT_CONFIG,
            Category::Data => EXIT_DATA,
            Category::Numeric => EXIT_NUMERIC,
        };
        CliError {
            class: e.class().into(),
            code,
            message: e.to_string(),
        }
    }
}
