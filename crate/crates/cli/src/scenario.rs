//! Scenario files: strict TOML with the flat sections `[grid]`,
//! `[materials]`, `[feedback]`, `[partition]`, `[experiment]`, `[output]`.
//! Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use mimax_core::grid::{BoundaryLabel, BoxSide, DofMap, FaceSelector, GridSpec, PartitionRule};
use mimax_core::materials::{tensor_field_from_packed, CellTensor, Feedback, Materials, Tensor2, Tensor3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {field}: {message}")]
    Invalid { path: String, field: String, message: String },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridSection,
    #[serde(default)]
    pub materials: MaterialsSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    pub partition: PartitionSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub cells: [usize; 3],
    pub spacing: f64,
    /// One byte per cell, x fastest, nonzero = active.
    pub mask_file: Option<PathBuf>,
    /// Inclusive cell-index boxes removed from the domain.
    #[serde(default)]
    pub holes: Vec<CellBox>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CellBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

/// A scalar, a diagonal `[a, b, c]`, or a full symmetric matrix.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum TensorSpec {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl TensorSpec {
    fn tensor(&self) -> Tensor3 {
        match self {
            TensorSpec::Scalar(v) => [[*v, 0.0, 0.0], [0.0, *v, 0.0], [0.0, 0.0, *v]],
            TensorSpec::Diagonal(d) => [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]],
            TensorSpec::Full(m) => *m,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum FeedbackSpec {
    Scalar(f64),
    Full([[f64; 2]; 2]),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSection {
    #[serde(default = "unit_tensor")]
    pub epsilon: TensorSpec,
    #[serde(default = "unit_tensor")]
    pub mu: TensorSpec,
    /// Packed per-cell tensors (`xx, yy, zz, xy, xz, yz`, little-endian f64);
    /// overrides `epsilon`.
    pub epsilon_file: Option<PathBuf>,
    pub mu_file: Option<PathBuf>,
}

fn unit_tensor() -> TensorSpec {
    TensorSpec::Scalar(1.0)
}

impl Default for MaterialsSection {
    fn default() -> Self {
        Self {
            epsilon: unit_tensor(),
            mu: unit_tensor(),
            epsilon_file: None,
            mu_file: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub k: FeedbackSpec,
}

impl Default for FeedbackSection {
    fn default() -> Self {
        Self {
            k: FeedbackSpec::Scalar(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Gamma0,
    Gamma1,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    /// Box sides on Γ1, e.g. `["+x", "-y"]`.
    #[serde(default)]
    pub gamma1: Vec<String>,
    /// Boundary faces whose centers lie in one of these boxes are on Γ1.
    #[serde(default)]
    pub gamma1_regions: Vec<Region>,
    #[serde(default = "default_label")]
    pub default: Label,
    #[serde(default)]
    pub allow_undamped: bool,
}

fn default_label() -> Label {
    Label::Gamma0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Verify,
    Spectrum,
    Resolvent,
    Simulate,
    DecayStudy,
    Decompose,
    Cohomology,
    Ucp,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Verify => "verify",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Resolvent => "resolvent",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::DecayStudy => "decay-study",
            ExperimentKind::Decompose => "decompose",
            ExperimentKind::Cohomology => "cohomology",
            ExperimentKind::Ucp => "ucp",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    #[default]
    Random,
    Zero,
    Snapshot,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMethod {
    #[default]
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorName {
    #[default]
    Midpoint,
    Leapfrog,
}

/// Parameters of every experiment; each verb reads the ones it needs.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Must match the verb when given.
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    /// Relative rank threshold for null spaces.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    #[serde(default = "one")]
    pub sample_every: usize,
    #[serde(default)]
    pub integrator: IntegratorName,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default)]
    pub x0: InitialState,
    pub x0_e: Option<PathBuf>,
    pub x0_h: Option<PathBuf>,
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_wavenumber")]
    pub max_wavenumber: usize,
    #[serde(default)]
    pub method: SpectrumMethod,
    #[serde(default = "default_nev")]
    pub nev: usize,
    #[serde(default = "default_krylov")]
    pub krylov_dim: usize,
    #[serde(default)]
    pub omegas: Vec<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_count: Option<usize>,
    /// Frequency for `ucp`; defaults to the lowest computed one.
    pub omega: Option<f64>,
    /// Box sides carrying zero Cauchy data for `ucp`.
    #[serde(default)]
    pub patch: Vec<String>,
    #[serde(default = "default_bands")]
    pub bands: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_probes() -> usize {
    100
}
fn one() -> usize {
    1
}
fn default_solver_tol() -> f64 {
    1e-11
}
fn default_states() -> usize {
    20
}
fn default_wavenumber() -> usize {
    2
}
fn default_nev() -> usize {
    6
}
fn default_krylov() -> usize {
    80
}
fn default_bands() -> usize {
    8
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Also write the assembled operators as `row,col,value` triplets.
    #[serde(default)]
    pub export_matrices: bool,
}

impl Scenario {
    pub fn parse(text: &str, path: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        s.validate(path)?;
        Ok(s)
    }

    fn validate(&self, path: &str) -> Result<(), ScenarioError> {
        let bad = |field: &str, message: String| ScenarioError::Invalid {
            path: path.to_string(),
            field: field.to_string(),
            message,
        };
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(field, format!("must be positive, got {v}")))
            }
        };
        positive("grid.spacing", self.grid.spacing)?;
        if self.grid.cells.contains(&0) {
            return Err(bad("grid.cells", format!("all dimensions must be positive, got {:?}", self.grid.cells)));
        }
        for (i, b) in self.grid.holes.iter().enumerate() {
            if (0..3).any(|a| b.min[a] > b.max[a] || b.max[a] >= self.grid.cells[a]) {
                return Err(bad(&format!("grid.holes[{i}]"), format!("box {:?}..{:?} outside the grid", b.min, b.max)));
            }
        }
        let x = &self.experiment;
        positive("experiment.tol", x.tol)?;
        positive("experiment.solver_tol", x.solver_tol)?;
        if let Some(dt) = x.dt {
            positive("experiment.dt", dt)?;
        }
        if let Some(t) = x.t_final {
            positive("experiment.t_final", t)?;
        }
        for (name, v) in [
            ("experiment.probes", x.probes),
            ("experiment.sample_every", x.sample_every),
            ("experiment.states", x.states),
            ("experiment.nev", x.nev),
            ("experiment.krylov_dim", x.krylov_dim),
            ("experiment.bands", x.bands),
        ] {
            if v == 0 {
                return Err(bad(name, "must be at least 1".into()));
            }
        }
        if x.omega_count == Some(0) {
            return Err(bad("experiment.omega_count", "must be at least 1".into()));
        }
        if let (Some(a), Some(b)) = (x.omega_min, x.omega_max) {
            if b < a {
                return Err(bad("experiment.omega_max", format!("{b} is below omega_min {a}")));
            }
        }
        for (i, s) in self.partition.gamma1.iter().enumerate() {
            if BoxSide::parse(s).is_none() {
                return Err(bad(&format!("partition.gamma1[{i}]"), format!("expected one of ±x, ±y, ±z, got {s:?}")));
            }
        }
        for (i, s) in x.patch.iter().enumerate() {
            if BoxSide::parse(s).is_none() {
                return Err(bad(&format!("experiment.patch[{i}]"), format!("expected one of ±x, ±y, ±z, got {s:?}")));
            }
        }
        if x.x0 == InitialState::Snapshot && (x.x0_e.is_none() || x.x0_h.is_none()) {
            return Err(bad("experiment.x0", "\"snapshot\" needs both x0_e and x0_h".into()));
        }
        Ok(())
    }

    /// Grid with holes and optional mask file applied. Relative paths are
    /// resolved against `base`.
    pub fn grid_spec(&self, base: &Path) -> Result<GridSpec, ScenarioError> {
        let spec = GridSpec::full_box(self.grid.cells, self.grid.spacing);
        let mut mask = match &self.grid.mask_file {
            Some(p) => {
                let p = base.join(p);
                let bytes = fs::read(&p).map_err(|source| ScenarioError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                spec.mask_from_bytes(&bytes).map_err(|e| ScenarioError::Invalid {
                    path: p.display().to_string(),
                    field: "grid.mask_file".into(),
                    message: e.to_string(),
                })?
            }
            None => vec![true; spec.cell_count()],
        };
        let [nx, ny, _] = self.grid.cells;
        for b in &self.grid.holes {
            for z in b.min[2]..=b.max[2] {
                for y in b.min[1]..=b.max[1] {
                    for x in b.min[0]..=b.max[0] {
                        mask[x + nx * (y + ny * z)] = false;
                    }
                }
            }
        }
        if mask.iter().all(|&m| m) {
            Ok(spec)
        } else {
            Ok(spec.with_mask(mask))
        }
    }

    pub fn materials(&self, base: &Path, dofmap: &DofMap) -> Result<Materials, ScenarioError> {
        let tensor = |spec: &TensorSpec, file: &Option<PathBuf>, field: &'static str| match file {
            None => Ok(CellTensor::Uniform(spec.tensor())),
            Some(p) => {
                let p = base.join(p);
                let bytes = fs::read(&p).map_err(|source| ScenarioError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                tensor_field_from_packed(dofmap, field, &bytes).map_err(|e| ScenarioError::Invalid {
                    path: p.display().to_string(),
                    field: format!("materials.{field}_file"),
                    message: e.to_string(),
                })
            }
        };
        Ok(Materials {
            epsilon: tensor(&self.materials.epsilon, &self.materials.epsilon_file, "epsilon")?,
            mu: tensor(&self.materials.mu, &self.materials.mu_file, "mu")?,
            feedback: match &self.feedback.k {
                FeedbackSpec::Scalar(k) => Feedback::scalar(*k),
                FeedbackSpec::Full(m) => Feedback::Uniform(*m as Tensor2),
            },
        })
    }

    pub fn partition(&self) -> PartitionRule {
        let mut rules: Vec<(FaceSelector, BoundaryLabel)> = self
            .partition
            .gamma1
            .iter()
            .filter_map(|s| BoxSide::parse(s))
            .map(|s| (FaceSelector::Side(s), BoundaryLabel::Gamma1))
            .collect();
        rules.extend(self.partition.gamma1_regions.iter().map(|r| {
            (
                FaceSelector::Region { min: r.min, max: r.max },
                BoundaryLabel::Gamma1,
            )
        }));
        PartitionRule {
            rules,
            default: Some(match self.partition.default {
                Label::Gamma0 => BoundaryLabel::Gamma0,
                Label::Gamma1 => BoundaryLabel::Gamma1,
            }),
            allow_undamped: self.partition.allow_undamped,
        }
    }

    /// The `ω` grid: explicit list, or `omega_count` points spaced evenly on
    /// `[omega_min, omega_max]`.
    pub fn omegas(&self) -> Vec<f64> {
        let x = &self.experiment;
        if !x.omegas.is_empty() {
            return x.omegas.clone();
        }
        match (x.omega_min, x.omega_max, x.omega_count) {
            (Some(a), Some(b), Some(n)) if n > 1 => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            (Some(a), _, Some(1)) => vec![a],
            _ => Vec::new(),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::parse(&text, &path.display().to_string())
}
