//! Discrete de Rham complex (grad, curl, div), boundary traces and the weak
//! curl defined through the discrete integration-by-parts identity
//!
//! `eᵀ M_ε C_weak h = (C e)ᵀ W h + (T_τ e)ᵀ M_Γ (T_× h)`
//!
//! where `W` is the geometric face weight (identity face mass).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{tangents, BoundaryLabel, DofMap, GridError};
use crate::krylov::{conjugate_gradient, KrylovError, SolverOptions};
use crate::materials::{self, CellTensor};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Clone, Debug)]
pub struct DiscreteComplex {
    /// Node → edge gradient.
    pub g: CsrMatrix,
    /// Edge → face curl.
    pub c: CsrMatrix,
    /// Face → cell divergence.
    pub d: CsrMatrix,
    /// Edge → trace tangential trace, two rows per boundary face.
    pub t_tau: CsrMatrix,
    /// Face → trace twisted tangential trace `ν × H`.
    pub t_cross: CsrMatrix,
    /// Trace-space area weights.
    pub m_gamma: CsrMatrix,
    /// Trace rows belonging to Γ1 faces, in boundary-face order.
    pub gamma1_rows: Vec<usize>,
    /// Indices into the boundary face list of the Γ1 faces.
    pub gamma1_faces: Vec<usize>,
    /// Indices into the boundary face list of the Γ0 faces.
    pub gamma0_faces: Vec<usize>,
}

impl DiscreteComplex {
    /// Rows of `T_τ` restricted to Γ1.
    pub fn t_tau_gamma1(&self) -> CsrMatrix {
        self.t_tau.submatrix(&self.gamma1_rows, &(0..self.t_tau.ncols()).collect::<Vec<_>>())
    }

    /// Rows of `T_×` restricted to Γ1.
    pub fn t_cross_gamma1(&self) -> CsrMatrix {
        self.t_cross.submatrix(&self.gamma1_rows, &(0..self.t_cross.ncols()).collect::<Vec<_>>())
    }
}

/// Incidence matrices of the active region, scaled by `1/h`.
pub fn assemble_complex(dofmap: &DofMap) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    let inv_h = 1.0 / dofmap.spacing();
    let mut tg = Vec::with_capacity(2 * dofmap.n_edges());
    for e in 0..dofmap.n_edges() {
        let (tail, head) = dofmap.edge_nodes(e);
        tg.push((e, head, inv_h));
        tg.push((e, tail, -inv_h));
    }
    let g = CsrMatrix::from_triplets(dofmap.n_edges(), dofmap.n_nodes(), &tg);

    let mut tc = Vec::with_capacity(4 * dofmap.n_faces());
    for f in 0..dofmap.n_faces() {
        for (e, s) in dofmap.face_edges(f) {
            tc.push((f, e, s * inv_h));
        }
    }
    let c = CsrMatrix::from_triplets(dofmap.n_faces(), dofmap.n_edges(), &tc);

    let mut td = Vec::with_capacity(6 * dofmap.n_cells());
    for cell in 0..dofmap.n_cells() {
        for [lo, hi] in dofmap.cell_faces(cell) {
            td.push((cell, hi, inv_h));
            td.push((cell, lo, -inv_h));
        }
    }
    let d = CsrMatrix::from_triplets(dofmap.n_cells(), dofmap.n_faces(), &td);
    (g, c, d)
}

/// Tangential and twisted tangential traces on every boundary face, with the
/// trace components expressed in the face frame `(t1, t2)`.
pub fn assemble_traces(dofmap: &DofMap) -> (CsrMatrix, CsrMatrix, CsrMatrix) {
    let bfaces = dofmap.boundary_faces();
    let mut tt = Vec::with_capacity(8 * bfaces.len());
    let mut tx = Vec::with_capacity(8 * bfaces.len());
    for (i, bf) in bfaces.iter().enumerate() {
        let (axis, p) = dofmap.face(bf.face);
        let (t1, t2) = tangents(axis);
        let mut p1 = p;
        p1[t1] += 1;
        let mut p2 = p;
        p2[t2] += 1;
        let edge = |a, q| dofmap.edge_id(a, q).expect("boundary face edge");
        // in-plane edges, averaged to the face center
        tt.push((2 * i, edge(t1, p), 0.5));
        tt.push((2 * i, edge(t1, p2), 0.5));
        tt.push((2 * i + 1, edge(t2, p), 0.5));
        tt.push((2 * i + 1, edge(t2, p1), 0.5));

        // tangential H from the two faces of the adjacent cell normal to
        // each tangent direction, then rotated by ν ×
        let faces = dofmap.cell_faces(bf.cell);
        let s = bf.outward as f64;
        for f in faces[t2] {
            tx.push((2 * i, f, -0.5 * s));
        }
        for f in faces[t1] {
            tx.push((2 * i + 1, f, 0.5 * s));
        }
    }
    let n = 2 * bfaces.len();
    let t_tau = CsrMatrix::from_triplets(n, dofmap.n_edges(), &tt);
    let t_cross = CsrMatrix::from_triplets(n, dofmap.n_faces(), &tx);
    let all: Vec<usize> = (0..bfaces.len()).collect();
    let m_gamma = materials::boundary_mass(dofmap, &all);
    (t_tau, t_cross, m_gamma)
}

/// Assembles the complex and traces on a labelled grid.
pub fn build_complex(dofmap: &DofMap) -> Result<DiscreteComplex, GridError> {
    let gamma1_faces = dofmap.boundary_with_label(BoundaryLabel::Gamma1)?;
    let gamma0_faces = dofmap.boundary_with_label(BoundaryLabel::Gamma0)?;
    let (g, c, d) = assemble_complex(dofmap);
    let (t_tau, t_cross, m_gamma) = assemble_traces(dofmap);
    let gamma1_rows = gamma1_faces.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect();
    Ok(DiscreteComplex {
        g,
        c,
        d,
        t_tau,
        t_cross,
        m_gamma,
        gamma1_rows,
        gamma1_faces,
        gamma0_faces,
    })
}

/// Mass matrices on one grid: material masses, geometric weights and the
/// trace masses.
#[derive(Clone, Debug)]
pub struct MassMatrices {
    pub m_eps: CsrMatrix,
    pub m_mu: CsrMatrix,
    /// Diagonal identity edge mass.
    pub edge_weights: Vec<f64>,
    /// Diagonal identity face mass `W`.
    pub face_weights: Vec<f64>,
}

impl MassMatrices {
    pub fn assemble(dofmap: &DofMap, epsilon: &CellTensor, mu: &CellTensor) -> Self {
        Self {
            m_eps: materials::edge_mass(dofmap, epsilon),
            m_mu: materials::face_mass(dofmap, mu),
            edge_weights: materials::edge_weights(dofmap),
            face_weights: materials::face_weights(dofmap),
        }
    }
}

/// DOFs left after eliminating the Γ0 constraints: edges and nodes in the
/// closure of Γ0 faces and the Γ0 faces themselves are removed.
#[derive(Clone, Debug, PartialEq)]
pub struct Restriction {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub faces: Vec<usize>,
}

impl Restriction {
    /// Removes the closure of the given boundary faces (indices into the
    /// boundary face list).
    pub fn excluding(dofmap: &DofMap, boundary: &[usize]) -> Self {
        let em = dofmap.edges_on_faces(boundary);
        let nm = dofmap.nodes_on_faces(boundary);
        let mut fm = vec![false; dofmap.n_faces()];
        for &b in boundary {
            fm[dofmap.boundary_faces()[b].face] = true;
        }
        let keep = |m: &[bool]| (0..m.len()).filter(|&i| !m[i]).collect::<Vec<_>>();
        Self {
            nodes: keep(&nm),
            edges: keep(&em),
            faces: keep(&fm),
        }
    }

    /// Keeps every DOF.
    pub fn none(dofmap: &DofMap) -> Self {
        Self::excluding(dofmap, &[])
    }
}

/// The weak curl, kept in factored form: `C_weak h = M_ε⁻¹ (rhs h)`.
#[derive(Clone, Debug)]
pub struct WeakCurl {
    pub rhs: CsrMatrix,
    pub m_eps: CsrMatrix,
}

pub const MASS_SOLVE: SolverOptions = SolverOptions::new(1e-14, 2000);

impl WeakCurl {
    pub fn new(complex: &DiscreteComplex, masses: &MassMatrices) -> Self {
        let boundary = complex
            .t_tau
            .transpose()
            .matmul(&complex.m_gamma)
            .matmul(&complex.t_cross);
        let ctw = complex.c.transpose().scale_cols(&masses.face_weights);
        Self {
            rhs: ctw.add(1.0, &boundary, 1.0),
            m_eps: masses.m_eps.clone(),
        }
    }

    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>, KrylovError> {
        let b = self.rhs.mul_vec(h);
        let mut x = vec![0.0; b.len()];
        conjugate_gradient(&self.m_eps, Some(&self.m_eps.diagonal()), &b, &mut x, MASS_SOLVE)?;
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbpReport {
    /// Largest scaled residual of the identity with the factored right-hand side.
    pub identity: f64,
    /// Largest scaled residual after resolving `C_weak h` by a mass solve.
    pub solved: f64,
    pub probes: usize,
}

/// Evaluates the summation-by-parts identity on random probes.
pub fn check_sbp(
    complex: &DiscreteComplex,
    masses: &MassMatrices,
    probes: usize,
    seed: u64,
) -> Result<SbpReport, KrylovError> {
    let weak = WeakCurl::new(complex, masses);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ne = complex.c.ncols();
    let nf = complex.c.nrows();
    let mut identity = 0.0f64;
    let mut solved = 0.0f64;
    for _ in 0..probes {
        let e: Vec<f64> = (0..ne).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..nf).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ce = complex.c.mul_vec(&e);
        let volume: f64 = ce.iter().zip(&h).zip(&masses.face_weights).map(|((a, b), w)| a * b * w).sum();
        let te = complex.t_tau.mul_vec(&e);
        let th = complex.t_cross.mul_vec(&h);
        let surface = dot(&te, &complex.m_gamma.mul_vec(&th));
        let lhs = dot(&e, &weak.rhs.mul_vec(&h));
        let scale = volume.abs() + surface.abs() + lhs.abs();
        identity = identity.max((lhs - volume - surface).abs() / scale);

        let cw = weak.apply(&h)?;
        let lhs2 = dot(&e, &masses.m_eps.mul_vec(&cw));
        let scale2 = scale.max(norm2(&e) * norm2(&weak.rhs.mul_vec(&h)));
        solved = solved.max((lhs2 - volume - surface).abs() / scale2);
    }
    Ok(SbpReport {
        identity,
        solved,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, classify_boundary, GridSpec, PartitionRule};

    fn labelled(n: usize, rule: PartitionRule) -> DofMap {
        classify_boundary(&build_grid(&GridSpec::unit_cube(n)).unwrap(), &rule).unwrap()
    }

    #[test]
    fn curl_of_rotation_field_is_two() {
        let d = labelled(4, PartitionRule::all_gamma1());
        let (_, c, _) = assemble_complex(&d);
        let e: Vec<f64> = (0..d.n_edges())
            .map(|i| {
                let x = d.edge_midpoint(i);
                match d.edge(i).0 {
                    0 => -x[1],
                    1 => x[0],
                    _ => 0.0,
                }
            })
            .collect();
        let ce = c.mul_vec(&e);
        for f in 0..d.n_faces() {
            let expect = if d.face(f).0 == 2 { 2.0 } else { 0.0 };
            assert!((ce[f] - expect).abs() < 1e-12, "face {f}: {}", ce[f]);
        }
    }

    #[test]
    fn constant_field_has_zero_curl_and_trace_reads_back() {
        let d = labelled(3, PartitionRule::all_gamma1());
        let cx = build_complex(&d).unwrap();
        let e: Vec<f64> = (0..d.n_edges()).map(|i| if d.edge(i).0 == 1 { 1.0 } else { 0.0 }).collect();
        assert!(cx.c.mul_vec(&e).iter().all(|v| *v == 0.0));
        let te = cx.t_tau.mul_vec(&e);
        for (i, bf) in d.boundary_faces().iter().enumerate() {
            let (t1, t2) = tangents(bf.axis);
            let expect = [(t1 == 1) as u8 as f64, (t2 == 1) as u8 as f64];
            assert_eq!([te[2 * i], te[2 * i + 1]], expect);
        }
    }

    #[test]
    fn twisted_trace_of_constant_field() {
        // ν × H for H = (0, 0, 1) on the face with outward normal +x is (0, -1, 0)
        let d = labelled(3, PartitionRule::all_gamma1());
        let cx = build_complex(&d).unwrap();
        let h: Vec<f64> = (0..d.n_faces()).map(|f| if d.face(f).0 == 2 { 1.0 } else { 0.0 }).collect();
        let th = cx.t_cross.mul_vec(&h);
        for (i, bf) in d.boundary_faces().iter().enumerate() {
            let nu = {
                let mut v = [0.0; 3];
                v[bf.axis] = bf.outward as f64;
                v
            };
            let cross = [nu[1], -nu[0], 0.0];
            let (t1, t2) = tangents(bf.axis);
            assert!((th[2 * i] - cross[t1]).abs() < 1e-15);
            assert!((th[2 * i + 1] - cross[t2]).abs() < 1e-15);
        }
    }

    #[test]
    fn sbp_identity_on_anisotropic_box() {
        let d = labelled(3, PartitionRule::gamma1_sides(&[crate::grid::BoxSide::XMIN]));
        let cx = build_complex(&d).unwrap();
        let eps = CellTensor::Uniform([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]]);
        let m = MassMatrices::assemble(&d, &eps, &CellTensor::scalar(1.0));
        let r = check_sbp(&cx, &m, 20, 7).unwrap();
        assert!(r.identity < 1e-13, "{r:?}");
        assert!(r.solved < 1e-12, "{r:?}");
    }

    #[test]
    fn restriction_counts_on_pec_box() {
        let d = labelled(2, PartitionRule::undamped());
        let r = Restriction::excluding(&d, &(0..d.boundary_faces().len()).collect::<Vec<_>>());
        assert_eq!(r.nodes.len(), 1);
        assert_eq!(r.edges.len(), 6);
        assert_eq!(r.faces.len(), 12);
    }
}
