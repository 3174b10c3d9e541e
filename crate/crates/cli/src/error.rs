use serde::Serialize;
use thiserror::Error;
use timed_dicke::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("physics domain error: {0}")]
    Physics(CoreError),

    /// A verification scenario found the implementation and its oracle apart.
    #[error("oracle disagreement: {0}")]
    Disagreement(String),

    #[error("numerical failure: {0}")]
    Numerical(CoreError),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        if err.is_physics_domain() {
            CliError::Physics(err)
        } else if let CoreError::Invalid(msg) = err {
            CliError::Config(msg)
        } else if let CoreError::Io(msg) = err {
            CliError::Io(msg)
        } else {
            CliError::Numerical(err)
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

#[derive(Serialize)]
struct Report<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Disagreement(_) => 4,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Physics(_) => "physics",
            CliError::Disagreement(_) => "disagreement",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON object for stderr.
    pub fn report(&self) -> String {
        let r = Report {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        };
        serde_json::to_string(&r).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}
