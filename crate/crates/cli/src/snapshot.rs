//! `MXW1` field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `MXW1`                            |
//! | 4     | version (u32, currently 1)              |
//! | 24    | grid dims (3 × u64)                     |
//! | 8     | spacing (f64)                           |
//! | 4     | species (u32: 0 node, 1 edge, 2 face, 3 cell) |
//! | 8     | count (u64)                             |
//! | 8·n   | payload (f64) in global DOF order       |

use std::fs;
use std::path::Path;

use mimax_core::grid::DofMap;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MXW1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 24 + 8 + 4 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Species {
    Node,
    Edge,
    Face,
    Cell,
}

impl Species {
    fn tag(self) -> u32 {
        match self {
            Species::Node => 0,
            Species::Edge => 1,
            Species::Face => 2,
            Species::Cell => 3,
        }
    }

    fn from_tag(t: u32) -> Option<Self> {
        Some(match t {
            0 => Species::Node,
            1 => Species::Edge,
            2 => Species::Face,
            3 => Species::Cell,
            _ => return None,
        })
    }

    pub fn count(self, dm: &DofMap) -> usize {
        match self {
            Species::Node => dm.n_nodes(),
            Species::Edge => dm.n_edges(),
            Species::Face => dm.n_faces(),
            Species::Cell => dm.n_cells(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic {0:?}, expected \"MXW1\"")]
    Magic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("unknown species tag {0}")]
    Species(u32),
    #[error("truncated snapshot: {got} bytes, expected {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("snapshot does not match the grid: {0}")]
    Mismatch(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub species: Species,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn new(dm: &DofMap, species: Species, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), species.count(dm));
        Self {
            dims: dm.dims(),
            spacing: dm.spacing(),
            species,
            values,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.spacing.to_le_bytes());
        out.extend_from_slice(&self.species.tag().to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < HEADER_LEN {
            return Err(SnapshotError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(SnapshotError::Magic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        let dims = [u64_at(8) as usize, u64_at(16) as usize, u64_at(24) as usize];
        let spacing = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let tag = u32_at(40);
        let species = Species::from_tag(tag).ok_or(SnapshotError::Species(tag))?;
        let count = u64_at(44) as usize;
        let expected = HEADER_LEN + 8 * count;
        if bytes.len() != expected {
            return Err(SnapshotError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            dims,
            spacing,
            species,
            values,
        })
    }

    /// Rejects a snapshot taken on a different grid or of another species.
    pub fn check(&self, dm: &DofMap, species: Species) -> Result<(), SnapshotError> {
        if self.dims != dm.dims() {
            return Err(SnapshotError::Mismatch(format!("dims {:?} vs grid {:?}", self.dims, dm.dims())));
        }
        if self.spacing.to_bits() != dm.spacing().to_bits() {
            return Err(SnapshotError::Mismatch(format!("spacing {} vs grid {}", self.spacing, dm.spacing())));
        }
        if self.species != species {
            return Err(SnapshotError::Mismatch(format!("species {:?}, expected {species:?}", self.species)));
        }
        let n = species.count(dm);
        if self.values.len() != n {
            return Err(SnapshotError::Mismatch(format!("{} values, grid has {n}", self.values.len())));
        }
        Ok(())
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), SnapshotError> {
    fs::write(path, snap.to_bytes()).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    let bytes = fs::read(path).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Snapshot::from_bytes(&bytes)
}

/// Reads a snapshot and checks it against the grid.
pub fn read_field(path: &Path, dm: &DofMap, species: Species) -> Result<Vec<f64>, SnapshotError> {
    let s = read_snapshot(path)?;
    s.check(dm, species)?;
    Ok(s.values)
}
