use std::path::Path;

use thiserror::Error;

use crate::scenario::ScenarioError;
use crate::snapshot::SnapshotError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Core(#[from] mimax_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario describes experiment {scenario:?} but the verb is {verb:?}")]
    VerbMismatch { verb: &'static str, scenario: &'static str },
    #[error("{verb} needs experiment.{field}")]
    Missing { verb: &'static str, field: &'static str },
    #[error("checks failed: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
    #[error("{0}")]
    Invalid(String),
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stable machine-readable class of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Scenario(_) => "scenario",
            RunError::Snapshot(_) => "snapshot",
            RunError::Core(e) => match e {
                mimax_core::Error::Grid(_) => "grid",
                mimax_core::Error::Material(_) => "material",
                mimax_core::Error::Krylov(_) => "solver",
                mimax_core::Error::Dense { .. } => "dense",
                mimax_core::Error::TooLarge { .. } => "too-large",
                mimax_core::Error::Constraint { .. } => "constraint",
                mimax_core::Error::Invalid(_) => "invalid",
            },
            RunError::Io { .. } => "io",
            RunError::Csv(_) | RunError::Json(_) => "report",
            RunError::VerbMismatch { .. } | RunError::Missing { .. } => "scenario",
            RunError::ChecksFailed(_) => "checks-failed",
            RunError::Invalid(_) => "invalid",
        }
    }

    /// Process exit status: 2 for bad input, 1 for failed experiments.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "scenario" | "snapshot" | "grid" | "material" => 2,
            _ => 1,
        }
    }
}
