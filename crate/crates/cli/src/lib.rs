//! Command-line plumbing: config files, run directories, reports and sweeps.

pub mod config;
pub mod report;
pub mod run_dir;
pub mod sweep;

pub use config::{load_config, parse_config, FileConfig, LoadedConfig};
pub use report::{render_report, ReportSummary};
pub use run_dir::{execute_run, RunManifest, RunOutcome, RunStatus};
pub use sweep::{run_sweep, SweepAxis, SweepSpec, SweepSummary};

/// Exit status for a successful command.
pub const EXIT_OK: i32 = 0;
/// Exit status when the configuration or arguments are rejected.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status when a run fails after it started.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn field(field: impl AsRef<str>, message: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("invalid `{}`: {message}", field.as_ref()))
    }

    pub fn from_core(e: llmopt_core::Error) -> Self {
        if e.is_configuration() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{context}: {e}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}
