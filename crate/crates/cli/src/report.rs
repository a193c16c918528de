//! Artifact writing and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::RunError;
use crate::snapshot::Snapshot;

/// Header of `trajectory.csv`, schema `trajectory/1`.
pub const TRAJECTORY_HEADER: [&str; 7] = [
    "t",
    "energy",
    "dissipation_rate",
    "norm_h",
    "div_residual_d",
    "div_residual_b",
    "dist_cohomology",
];
/// Header of `envelope.csv`, schema `envelope/1`.
pub const ENVELOPE_HEADER: [&str; 4] = ["t", "envelope", "max_curve", "min_curve"];
/// Header of `decay_table.csv`, schema `decay-table/1`.
pub const DECAY_TABLE_HEADER: [&str; 2] = ["abs_im", "neg_re"];
/// Header of `resolvent.csv`, schema `resolvent-csv/1`; empty cells mark
/// frequencies where the singular value solver failed.
pub const RESOLVENT_HEADER: [&str; 3] = ["omega", "sigma_min", "resolvent_norm"];
/// Header of `verify.csv`, schema `verify/1`.
pub const VERIFY_HEADER: [&str; 4] = ["check", "value", "tolerance", "pass"];
/// Header of matrix exports, schema `triplets/1`.
pub const TRIPLET_HEADER: [&str; 3] = ["row", "col", "value"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub schema: &'static str,
}

/// Single writer for everything an experiment emits.
pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<Artifact>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8], schema: &'static str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        self.written.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            schema,
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T, schema: &'static str) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes(), schema)
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I, schema: &'static str) -> Result<(), RunError>
    where
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
        I: IntoIterator<Item = R>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Invalid(e.to_string()))?;
        self.bytes(name, &bytes, schema)
    }

    pub fn snapshot(&mut self, name: &str, snap: &Snapshot) -> Result<(), RunError> {
        self.bytes(name, &snap.to_bytes(), "mxw1")
    }
}

/// Formats a float so that it parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub verb: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub status: &'static str,
    /// Set when the run failed after writing some artifacts.
    pub partial: bool,
    pub failure: Option<Failure>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))
    }
}
