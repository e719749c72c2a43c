//! Library side of the `annoseg` command-line tool: run configuration,
//! the shared pipeline and one function per subcommand.

pub mod commands;
pub mod config;
pub mod pipeline;

/// Failures are split by exit code: bad input or configuration exits 1,
/// anything that goes wrong while doing the work exits 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<annoseg::Error> for CliError {
    fn from(e: annoseg::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
