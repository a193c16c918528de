//! Cellwise material tensors, the impedance feedback operator and the mass
//! matrices they induce on edges, faces and boundary traces.

use faer::{Mat, Side};
use thiserror::Error;

use crate::grid::{tangents, BoundaryLabel, DofMap, GridError};
use crate::sparse::CsrMatrix;

pub type Tensor3 = [[f64; 3]; 3];
pub type Tensor2 = [[f64; 2]; 2];

pub const IDENTITY3: Tensor3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("{field} has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{field} tensor {index} is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric {
        field: &'static str,
        index: usize,
        asymmetry: f64,
    },
    #[error("{field} tensor {index} is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositive {
        field: &'static str,
        index: usize,
        min_eig: f64,
    },
    #[error("{field} tensor {index} has non-finite entries")]
    NonFinite { field: &'static str, index: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A symmetric positive definite tensor field, constant on each cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellTensor {
    Uniform(Tensor3),
    PerCell(Vec<Tensor3>),
}

impl CellTensor {
    pub fn scalar(v: f64) -> Self {
        CellTensor::Uniform(scale3(&IDENTITY3, v))
    }

    pub fn diagonal(d: [f64; 3]) -> Self {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            t[i][i] = d[i];
        }
        CellTensor::Uniform(t)
    }

    pub fn at(&self, cell: usize) -> &Tensor3 {
        match self {
            CellTensor::Uniform(t) => t,
            CellTensor::PerCell(v) => &v[cell],
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            CellTensor::Uniform(_) => None,
            CellTensor::PerCell(v) => Some(v.len()),
        }
    }
}

/// Feedback operator on Γ1, a symmetric positive definite 2×2 tensor per face
/// in the face frame `(t1, t2)` (see [`tangents`]).
#[derive(Clone, Debug, PartialEq)]
pub enum Feedback {
    Uniform(Tensor2),
    /// One tensor per Γ1 face, in the order of the Γ1 boundary faces.
    PerFace(Vec<Tensor2>),
}

impl Feedback {
    pub fn scalar(k: f64) -> Self {
        Feedback::Uniform([[k, 0.0], [0.0, k]])
    }

    pub fn at(&self, i: usize) -> &Tensor2 {
        match self {
            Feedback::Uniform(t) => t,
            Feedback::PerFace(v) => &v[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Materials {
    pub epsilon: CellTensor,
    pub mu: CellTensor,
    pub feedback: Feedback,
}

impl Materials {
    pub fn vacuum(k: f64) -> Self {
        Self {
            epsilon: CellTensor::scalar(1.0),
            mu: CellTensor::scalar(1.0),
            feedback: Feedback::scalar(k),
        }
    }
}

/// Spectral bounds of a validated tensor field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialBounds {
    pub epsilon: Bounds,
    pub mu: Bounds,
    pub feedback: Option<Bounds>,
}

fn scale3(t: &Tensor3, s: f64) -> Tensor3 {
    t.map(|r| r.map(|v| v * s))
}

fn eig_bounds(field: &'static str, index: usize, rows: &[&[f64]]) -> Result<Bounds, MaterialError> {
    let n = rows.len();
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(MaterialError::NonFinite { field, index });
    }
    let scale = rows.iter().flat_map(|r| r.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((rows[i][j] - rows[j][i]).abs());
        }
    }
    if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(MaterialError::NotSymmetric {
            field,
            index,
            asymmetry: asym,
        });
    }
    let m = Mat::from_fn(n, n, |i, j| rows[i][j]);
    let ev = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| MaterialError::NonFinite { field, index })?;
    let (min, max) = (ev[0], ev[n - 1]);
    if min <= 0.0 {
        return Err(MaterialError::NotPositive {
            field,
            index,
            min_eig: min,
        });
    }
    Ok(Bounds { min, max })
}

fn tensor_field_bounds(field: &'static str, t: &CellTensor, n_cells: usize) -> Result<Bounds, MaterialError> {
    if let Some(len) = t.len() {
        if len != n_cells {
            return Err(MaterialError::Length {
                field,
                expected: n_cells,
                got: len,
            });
        }
    }
    let count = t.len().unwrap_or(1);
    let mut out = Bounds {
        min: f64::INFINITY,
        max: 0.0,
    };
    for c in 0..count {
        let m = t.at(c);
        let b = eig_bounds(field, c, &[&m[0], &m[1], &m[2]])?;
        out.min = out.min.min(b.min);
        out.max = out.max.max(b.max);
    }
    Ok(out)
}

/// Checks symmetry, positivity and sizes against a labelled grid, returning
/// the spectral bounds of every field.
pub fn validate(materials: &Materials, dofmap: &DofMap) -> Result<MaterialBounds, MaterialError> {
    let n_cells = dofmap.n_cells();
    let epsilon = tensor_field_bounds("epsilon", &materials.epsilon, n_cells)?;
    let mu = tensor_field_bounds("mu", &materials.mu, n_cells)?;
    let n_g1 = dofmap.boundary_with_label(BoundaryLabel::Gamma1)?.len();
    let count = match &materials.feedback {
        Feedback::Uniform(_) => usize::from(n_g1 > 0),
        Feedback::PerFace(v) => {
            if v.len() != n_g1 {
                return Err(MaterialError::Length {
                    field: "feedback",
                    expected: n_g1,
                    got: v.len(),
                });
            }
            n_g1
        }
    };
    let mut feedback: Option<Bounds> = None;
    for i in 0..count {
        let k = materials.feedback.at(i);
        let b = eig_bounds("feedback", i, &[&k[0], &k[1]])?;
        feedback = Some(match feedback {
            None => b,
            Some(f) => Bounds {
                min: f.min.min(b.min),
                max: f.max.max(b.max),
            },
        });
    }
    Ok(MaterialBounds {
        epsilon,
        mu,
        feedback,
    })
}

/// Samples a tensor formula at the active cell centers and validates it;
/// a failure names the offending cell.
pub fn sample_tensor_field(
    dofmap: &DofMap,
    field: &'static str,
    f: impl Fn([f64; 3]) -> Tensor3,
) -> Result<(CellTensor, Bounds), MaterialError> {
    let t = CellTensor::PerCell((0..dofmap.n_cells()).map(|c| f(dofmap.cell_center(c))).collect());
    let b = tensor_field_bounds(field, &t, dofmap.n_cells())?;
    Ok((t, b))
}

/// Reads tensors packed as `xx, yy, zz, xy, xz, yz` little-endian `f64` per
/// cell, either one record per active cell or one per cell of the bounding
/// box (x fastest).
pub fn tensor_field_from_packed(dofmap: &DofMap, field: &'static str, bytes: &[u8]) -> Result<CellTensor, MaterialError> {
    let records = bytes.len() / 48;
    let dims = dofmap.dims();
    let full = dims[0] * dims[1] * dims[2];
    if bytes.len() % 48 != 0 || (records != dofmap.n_cells() && records != full) {
        return Err(MaterialError::Length {
            field,
            expected: dofmap.n_cells(),
            got: records,
        });
    }
    let read = |r: usize| -> Tensor3 {
        let v: [f64; 6] = std::array::from_fn(|k| {
            let o = 48 * r + 8 * k;
            f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap())
        });
        [[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]]
    };
    let tensors = (0..dofmap.n_cells())
        .map(|c| {
            if records == dofmap.n_cells() {
                read(c)
            } else {
                let p = dofmap.cell(c);
                read(p[0] + dims[0] * (p[1] + dims[1] * p[2]))
            }
        })
        .collect();
    let t = CellTensor::PerCell(tensors);
    tensor_field_bounds(field, &t, dofmap.n_cells())?;
    Ok(t)
}

/// Edge mass `M` with `eᵀ M e ≈ ∫ Eᵀ T E`, assembled by corner quadrature:
/// each cell corner couples the three edges meeting there through `T`.
pub fn edge_mass(dofmap: &DofMap, tensor: &CellTensor) -> CsrMatrix {
    let w = dofmap.spacing().powi(3) / 8.0;
    let mut trip = Vec::with_capacity(dofmap.n_cells() * 72);
    for c in 0..dofmap.n_cells() {
        let t = tensor.at(c);
        let edges = dofmap.cell_edges(c);
        for corner in 0..8 {
            let s = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let local: [usize; 3] = std::array::from_fn(|a| {
                let (t1, t2) = tangents(a);
                edges[a][2 * s[t2] + s[t1]]
            });
            push_block(&mut trip, &local, t, w);
        }
    }
    CsrMatrix::from_triplets(dofmap.n_edges(), dofmap.n_edges(), &trip)
}

/// Face mass `M` with `hᵀ M h ≈ ∫ Hᵀ T H`, assembled by corner quadrature
/// over the three faces meeting at each cell corner.
pub fn face_mass(dofmap: &DofMap, tensor: &CellTensor) -> CsrMatrix {
    let w = dofmap.spacing().powi(3) / 8.0;
    let mut trip = Vec::with_capacity(dofmap.n_cells() * 72);
    for c in 0..dofmap.n_cells() {
        let t = tensor.at(c);
        let faces = dofmap.cell_faces(c);
        for corner in 0..8 {
            let s = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let local: [usize; 3] = std::array::from_fn(|a| faces[a][s[a]]);
            push_block(&mut trip, &local, t, w);
        }
    }
    CsrMatrix::from_triplets(dofmap.n_faces(), dofmap.n_faces(), &trip)
}

fn push_block(trip: &mut Vec<(usize, usize, f64)>, local: &[usize; 3], t: &Tensor3, w: f64) {
    for a in 0..3 {
        for b in 0..3 {
            if t[a][b] != 0.0 {
                trip.push((local[a], local[b], w * t[a][b]));
            }
        }
    }
}

/// Diagonal of the identity edge mass: `h³/4` per adjacent active cell.
pub fn edge_weights(dofmap: &DofMap) -> Vec<f64> {
    let v = dofmap.spacing().powi(3) / 4.0;
    (0..dofmap.n_edges())
        .map(|e| v * dofmap.edge_cell_count(e) as f64)
        .collect()
}

/// Diagonal of the identity face mass: `h³/2` per adjacent active cell.
pub fn face_weights(dofmap: &DofMap) -> Vec<f64> {
    let v = dofmap.spacing().powi(3) / 2.0;
    (0..dofmap.n_faces())
        .map(|f| v * dofmap.face_cell_count(f) as f64)
        .collect()
}

/// Mass of the tangential trace space on the selected boundary faces: `h²`
/// per component.
pub fn boundary_mass(dofmap: &DofMap, faces: &[usize]) -> CsrMatrix {
    let h2 = dofmap.spacing().powi(2);
    CsrMatrix::from_diagonal(&vec![h2; 2 * faces.len()])
}

/// Block-diagonal `h² k_f` on the Γ1 trace space, or `h² k_f⁻¹` when
/// `inverse` is set.
pub fn feedback_mass(dofmap: &DofMap, feedback: &Feedback, n_gamma1: usize, inverse: bool) -> CsrMatrix {
    let h2 = dofmap.spacing().powi(2);
    let mut trip = Vec::with_capacity(4 * n_gamma1);
    for i in 0..n_gamma1 {
        let k = feedback.at(i);
        let m = if inverse {
            let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
            [[k[1][1] / det, -k[0][1] / det], [-k[1][0] / det, k[0][0] / det]]
        } else {
            *k
        };
        for a in 0..2 {
            for b in 0..2 {
                trip.push((2 * i + a, 2 * i + b, h2 * m[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(2 * n_gamma1, 2 * n_gamma1, &trip)
}
