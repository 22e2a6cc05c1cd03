use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage, used to name where a run failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Synthesize,
    Fit,
    Network,
    Map,
    Sample,
    Estimate,
    Reference,
    Compare,
    Write,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Synthesize => "synthesize",
            Stage::Fit => "fit",
            Stage::Network => "network",
            Stage::Map => "map",
            Stage::Sample => "sample",
            Stage::Estimate => "estimate",
            Stage::Reference => "reference",
            Stage::Compare => "compare",
            Stage::Write => "write",
        };
        f.pad(s)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("could not parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: spdebnn_core::Error,
    },

    #[error("missing artifact {}", .0.display())]
    MissingArtifacts(PathBuf),

    #[error("{0}")]
    CheckFailed(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use spdebnn_core::Error as E;
        match self {
            CliError::Validation { .. } | CliError::Parse { .. } => 2,
            CliError::Stage { source, .. } => match source {
                E::Invalid { .. } | E::DimensionMismatch { .. } | E::IndexOutOfRange { .. } => 2,
                E::Io(_) | E::Json(_) | E::Format { .. } => 4,
                _ => 3,
            },
            CliError::CheckFailed(_) => 3,
            CliError::MissingArtifacts(_) | CliError::Io { .. } => 4,
        }
    }

    /// One-line JSON error report for stderr.
    pub fn report(&self) -> serde_json::Value {
        let stage = match self {
            CliError::Stage { stage, .. } => stage.to_string(),
            CliError::Validation { .. } | CliError::Parse { .. } => Stage::Config.to_string(),
            CliError::MissingArtifacts(_) | CliError::Io { .. } => Stage::Write.to_string(),
            CliError::CheckFailed(_) => "check".to_string(),
        };
        serde_json::json!({
            "error": self.to_string(),
            "stage": stage,
            "exit_code": self.exit_code(),
        })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Attaches a stage to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for spdebnn_core::Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
