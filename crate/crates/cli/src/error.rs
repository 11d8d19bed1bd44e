use serde::Serialize;
use thiserror::Error;

/// Failure class of a command; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Config,
    Data,
    Solver,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Solver => 4,
        }
    }
}

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct CliError {
    pub kind: Kind,
    /// Pipeline stage that failed, e.g. `config`, `load`, `tune`.
    pub stage: String,
    pub message: String,
}

/// The machine-readable form printed on stderr.
#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    kind: Kind,
    stage: &'a str,
    exit_code: i32,
    message: &'a str,
}

impl CliError {
    pub fn new(kind: Kind, stage: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind,
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, "config", message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// One-line JSON record describing the failure.
    pub fn record(&self) -> String {
        let rec = ErrorRecord {
            error: "spectre",
            kind: self.kind,
            stage: &self.stage,
            exit_code: self.exit_code(),
            message: &self.message,
        };
        serde_json::to_string(&rec).expect("plain record serializes")
    }
}

/// Tags core errors with the stage they came from. Invalid arguments are
/// data problems here: configuration is validated before any stage runs.
pub fn at(stage: &str) -> impl Fn(spectre::Error) -> CliError + '_ {
    move |e| {
        let kind = match &e {
            spectre::Error::Solver(_) | spectre::Error::NotConverged { .. } | spectre::Error::DegenerateGroup { .. } => Kind::Solver,
            _ => Kind::Data,
        };
        CliError::new(kind, stage, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
