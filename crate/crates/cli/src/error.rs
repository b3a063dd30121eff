//! CLI error envelope: every failure is reported as machine-readable JSON
//! on stderr with the originating module and a stable exit code
//! (2 = configuration, 3 = numeric/runtime).

use crate::config::ConfigError;
use snb_core::error::{CriticalError, FtError, SimError, SpecError, TfError};
use std::path::Path;

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub module: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            category: "config",
            module: "config",
            message: message.into(),
            exit_code: 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            category: "io",
            module: "io",
            message: format!("{}: {e}", path.display()),
            exit_code: 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "category": self.category,
                "module": self.module,
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e.0)
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError {
            category: "config",
            module: "converter",
            message: e.to_string(),
            exit_code: 2,
        }
    }
}

impl From<TfError> for CliError {
    fn from(e: TfError) -> Self {
        CliError {
            category: "numeric",
            module: "tf",
            message: e.to_string(),
            exit_code: 3,
        }
    }
}

impl From<FtError> for CliError {
    fn from(e: FtError) -> Self {
        CliError {
            category: "numeric",
            module: "ftransform",
            message: e.to_string(),
            exit_code: 3,
        }
    }
}

impl From<CriticalError> for CliError {
    fn from(e: CriticalError) -> Self {
        match e {
            CriticalError::Spec(inner) => inner.into(),
            CriticalError::Tf(inner) => inner.into(),
            CriticalError::Ft(inner) => inner.into(),
            other => CliError {
                category: "numeric",
                module: "critical",
                message: other.to_string(),
                exit_code: 3,
            },
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Spec(inner) => inner.into(),
            SimError::Critical(inner) => inner.into(),
            other => CliError {
                category: "numeric",
                module: "sim",
                message: other.to_string(),
                exit_code: 3,
            },
        }
    }
}
