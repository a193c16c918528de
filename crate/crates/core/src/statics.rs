//! Harmonic fields (discrete cohomology), weighted Helmholtz decompositions,
//! equilibria of the static system and the splitting of initial data into an
//! equilibrium plus a part in the dynamic state space.
//!
//! Two carriers are used. Edge fields carry potentials on nodes and the
//! tangential boundary condition is imposed by removing edges; face fields
//! carry potentials on cells (with zero ghost values on the boundary faces
//! that are kept) and the normal condition is imposed by removing faces.

use faer::Mat;

use crate::dense::{self, column};
use crate::error::{Error, Result};
use crate::grid::DofMap;
use crate::krylov::{conjugate_gradient, SolveStats, SolverOptions};
use crate::model::Model;
use crate::operators::Restriction;
use crate::sparse::{axpy, dot, norm2, sub, CsrMatrix};

/// Largest carrier handled by the dense singular-value route.
pub const DENSE_LIMIT: usize = 8000;
pub const POISSON: SolverOptions = SolverOptions::new(1e-13, 20_000);
pub const GAP_WARNING: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carrier {
    Edge,
    Face,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    /// Curl-free fields with vanishing tangential trace on all of ∂Ω that are
    /// ε-divergence-free.
    E,
    /// Curl-free fields with vanishing tangential trace on Γ1 whose μ-flux is
    /// divergence-free with vanishing normal component on Γ0.
    H,
}

/// A field species with a boundary pair built in.
#[derive(Clone, Debug)]
pub struct CarrierSpace {
    pub kind: Carrier,
    /// Global indices of the kept DOFs.
    pub dofs: Vec<usize>,
    n_full: usize,
    /// Weight restricted to `dofs`.
    pub weight: CsrMatrix,
    /// Potential → field map on the kept DOFs.
    pub grad: CsrMatrix,
    /// Rows whose vanishing expresses curl-freeness.
    pub curl: CsrMatrix,
}

impl CarrierSpace {
    /// Edge fields vanishing on the closure of `removed` (boundary face
    /// indices), with node potentials vanishing on the closure of `grounded`.
    pub fn edges(model: &Model, weight: &CsrMatrix, removed: &[usize], grounded: &[usize]) -> Self {
        let r = Restriction::excluding(&model.dofmap, removed);
        let nodes = Restriction::excluding(&model.dofmap, grounded).nodes;
        let all_faces: Vec<usize> = (0..model.dofmap.n_faces()).collect();
        Self {
            kind: Carrier::Edge,
            n_full: model.dofmap.n_edges(),
            weight: weight.submatrix(&r.edges, &r.edges),
            grad: model.complex.g.submatrix(&r.edges, &nodes),
            curl: model.complex.c.submatrix(&all_faces, &r.edges),
            dofs: r.edges,
        }
    }

    /// Face fields vanishing on the `removed` boundary faces. Cell potentials
    /// take zero ghost values on the remaining boundary faces, and curl-free
    /// is tested against edges off the closure of `removed`, which imposes a
    /// vanishing tangential trace on the remaining boundary weakly.
    pub fn faces(model: &Model, weight: &CsrMatrix, removed: &[usize]) -> Self {
        let r = Restriction::excluding(&model.dofmap, removed);
        let h3 = model.spacing().powi(3);
        let w = &model.masses.face_weights;
        let cells: Vec<usize> = (0..model.dofmap.n_cells()).collect();
        let dt = model.complex.d.submatrix(&cells, &r.faces).transpose();
        let scale: Vec<f64> = r.faces.iter().map(|&f| -h3 / w[f]).collect();
        let ctw = model.complex.c.transpose().scale_cols(w);
        Self {
            kind: Carrier::Face,
            n_full: model.dofmap.n_faces(),
            weight: weight.submatrix(&r.faces, &r.faces),
            grad: dt.scale_rows(&scale),
            curl: ctw.submatrix(&r.edges, &r.faces),
            dofs: r.faces,
        }
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Restricts a full-length field, rejecting nonzero values on removed DOFs.
    pub fn restrict(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.n_full {
            return Err(Error::Invalid(format!(
                "field has {} entries, expected {}",
                full.len(),
                self.n_full
            )));
        }
        let kept: f64 = self.dofs.iter().map(|&i| full[i] * full[i]).sum();
        let total: f64 = full.iter().map(|v| v * v).sum();
        if total - kept > 1e-24 * total.max(f64::MIN_POSITIVE) {
            return Err(Error::Constraint {
                constraint: "boundary condition (field nonzero on constrained DOFs)",
                residual: ((total - kept) / total).sqrt(),
                tol: 1e-12,
            });
        }
        Ok(self.dofs.iter().map(|&i| full[i]).collect())
    }

    pub fn extend(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full];
        for (k, &i) in self.dofs.iter().enumerate() {
            out[i] = r[k];
        }
        out
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, &self.weight.mul_vec(b))
    }

    /// Harmonic fields: null space of the stacked curl and weighted divergence
    /// constraints, orthonormalized in the weight.
    pub fn harmonic_basis(&self, rel_tol: f64) -> Result<CohomologyBasis> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                what: "harmonic field computation",
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        let div = self.grad.transpose().matmul(&self.weight);
        let m1 = self.curl.nrows();
        let mut stacked = Mat::<f64>::zeros(m1 + div.nrows(), n);
        for (r, c, v) in self.curl.triplets() {
            stacked[(r, c)] = v;
        }
        for (r, c, v) in div.triplets() {
            stacked[(m1 + r, c)] = v;
        }
        let ns = dense::null_space(stacked.as_ref(), rel_tol)?;
        let basis = dense::m_orthonormalize(ns.basis.as_ref(), &self.weight)?;
        let warning = (ns.gap_ratio < GAP_WARNING).then(|| {
            format!(
                "no clear singular value gap at the cut (ratio {:.3e}); values near the cut: {:?}",
                ns.gap_ratio,
                ns.tail(6)
            )
        });
        Ok(CohomologyBasis {
            kind: self.kind,
            dofs: self.dofs.clone(),
            n_full: self.n_full,
            basis,
            threshold: ns.threshold,
            gap_ratio: ns.gap_ratio,
            tail: ns.tail(6),
            warning,
        })
    }

    /// Splits `field` (full length) into gradient, harmonic and curl parts,
    /// mutually orthogonal in the weight.
    pub fn decompose(&self, field: &[f64], harmonic: &CohomologyBasis) -> Result<HelmholtzParts> {
        let f = self.restrict(field)?;
        let (grad, stats) = self.gradient_part(&f)?;
        let rest = sub(&f, &grad);
        let harm = harmonic.project_restricted(&self.weight, &rest);
        let curl = sub(&rest, &harm);
        Ok(HelmholtzParts {
            grad: self.extend(&grad),
            harmonic: self.extend(&harm),
            curl: self.extend(&curl),
            solve: stats,
        })
    }

    /// Weighted projection onto the range of `grad`, on restricted vectors.
    pub fn gradient_part(&self, f: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let wg = self.weight.matmul(&self.grad);
        let k = self.grad.transpose().matmul(&wg);
        let rhs = wg.transpose_mul_vec(f);
        let mut phi = vec![0.0; k.nrows()];
        // a right-hand side at rounding level is inconsistent with the kernel
        // of a semidefinite K; the gradient part is zero then
        let bound = abs_product(&wg, f);
        if norm2(&rhs) <= 1e-13 * norm2(&bound) {
            return Ok((
                vec![0.0; self.grad.nrows()],
                SolveStats {
                    iterations: 0,
                    rel_residual: 0.0,
                },
            ));
        }
        let stats = conjugate_gradient(&k, Some(&k.diagonal()), &rhs, &mut phi, POISSON)?;
        Ok((self.grad.mul_vec(&phi), stats))
    }
}

#[derive(Clone, Debug)]
pub struct CohomologyBasis {
    pub kind: Carrier,
    pub dofs: Vec<usize>,
    n_full: usize,
    /// Weight-orthonormal basis on the kept DOFs, one column per field.
    pub basis: Mat<f64>,
    pub threshold: f64,
    pub gap_ratio: f64,
    /// Singular values bracketing the cut.
    pub tail: Vec<f64>,
    pub warning: Option<String>,
}

impl CohomologyBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Basis field `j` at full length.
    pub fn field(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full];
        for (k, &i) in self.dofs.iter().enumerate() {
            out[i] = self.basis[(k, j)];
        }
        out
    }

    fn project_restricted(&self, weight: &CsrMatrix, r: &[f64]) -> Vec<f64> {
        let wr = weight.mul_vec(r);
        let mut out = vec![0.0; r.len()];
        for j in 0..self.dim() {
            let v = column(self.basis.as_ref(), j);
            axpy(dot(&v, &wr), &v, &mut out);
        }
        out
    }

    /// Weighted projection of a full-length field onto the span of the basis.
    pub fn project(&self, weight_full: &CsrMatrix, x: &[f64]) -> Vec<f64> {
        let wx = weight_full.mul_vec(x);
        let mut out = vec![0.0; self.n_full];
        for j in 0..self.dim() {
            let v = self.field(j);
            axpy(dot(&v, &wx), &v, &mut out);
        }
        out
    }
}

/// Harmonic fields of the configured boundary partition.
pub fn compute_cohomology(model: &Model, which: Which, rel_tol: f64) -> Result<CohomologyBasis> {
    space_for(model, which).harmonic_basis(rel_tol)
}

/// The carrier on which the harmonic fields of `which` live.
pub fn space_for(model: &Model, which: Which) -> CarrierSpace {
    match which {
        Which::E => {
            let all: Vec<usize> = (0..model.dofmap.boundary_faces().len()).collect();
            CarrierSpace::edges(model, &model.masses.m_eps, &all, &all)
        }
        Which::H => CarrierSpace::faces(model, &model.masses.m_mu, &model.complex.gamma0_faces),
    }
}

#[derive(Clone, Debug)]
pub struct HelmholtzParts {
    pub grad: Vec<f64>,
    pub harmonic: Vec<f64>,
    pub curl: Vec<f64>,
    pub solve: SolveStats,
}

impl HelmholtzParts {
    pub fn sum(&self) -> Vec<f64> {
        self.grad
            .iter()
            .zip(&self.harmonic)
            .zip(&self.curl)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumResiduals {
    /// Relative residual of the nodal Gauss law for the electric flux.
    pub gauss_e: f64,
    /// `‖C e‖ / (‖e‖/h)`.
    pub curl_e: f64,
    /// `‖D b‖ / (‖b‖/h)` of the magnetic flux.
    pub div_b: f64,
    /// Relative mismatch of the Γ1 trace data (electric, magnetic).
    pub trace: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct EquilibriumState {
    /// Electric field on all edges.
    pub e: Vec<f64>,
    /// Magnetic field on all faces.
    pub h: Vec<f64>,
    pub residuals: EquilibriumResiduals,
}

/// `|Mᵀ| |x|` entrywise, a bound on the rounding error of `Mᵀ x`.
fn abs_product(m: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    for (r, c, v) in m.triplets() {
        out[c] += (v * x[r]).abs();
    }
    out
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Solves `rot E = 0, div εE = ρ, rot H = 0, div μH = 0` with `πτE = 0` on Γ0,
/// `ν·μH = 0` on Γ0 and, when `h_trace` is given, `π×H = h_trace` and
/// `πτE = -k h_trace` on Γ1. `rho` is a charge density on the interior
/// nodes. The returned state is orthogonal to the harmonic fields.
pub fn solve_equilibrium(
    model: &Model,
    rho: &[f64],
    h_trace: Option<&[f64]>,
    cohom_e: &CohomologyBasis,
    cohom_h: &CohomologyBasis,
) -> Result<EquilibriumState> {
    let dm = &model.dofmap;
    let h = model.spacing();
    if rho.len() != model.interior_nodes.len() {
        return Err(Error::Invalid(format!(
            "charge density has {} entries, expected one per interior node ({})",
            rho.len(),
            model.interior_nodes.len()
        )));
    }
    let n_g1 = model.complex.gamma1_faces.len();
    if let Some(t) = h_trace {
        if t.len() != 2 * n_g1 {
            return Err(Error::Invalid(format!(
                "trace data has {} entries, expected two per Γ1 face ({})",
                t.len(),
                2 * n_g1
            )));
        }
    }
    let data = h_trace.filter(|t| t.iter().any(|v| *v != 0.0));

    // electric part: boundary potential on Γ1 fitted to the trace data,
    // then the grounded Poisson problem inside
    let mut phi_full = vec![0.0; dm.n_nodes()];
    let mut trace_e = 0.0;
    if let Some(t) = data {
        let free_nodes = &model.free.nodes;
        let bnodes: Vec<usize> = free_nodes.iter().copied().filter(|&n| dm.is_boundary_node(n)).collect();
        let edges: Vec<usize> = (0..dm.n_edges()).collect();
        let gb = model.complex.g.submatrix(&edges, &bnodes);
        let tt = model.complex.t_tau_gamma1();
        let a = tt.matmul(&gb);
        let kt = feedback_times(model, t);
        let target: Vec<f64> = kt.iter().map(|v| -v).collect();
        let ata = a.transpose().matmul(&a);
        let rhs = a.transpose_mul_vec(&target);
        let mut pb = vec![0.0; bnodes.len()];
        conjugate_gradient(&ata, Some(&ata.diagonal()), &rhs, &mut pb, POISSON)?;
        trace_e = rel(norm2(&sub(&a.mul_vec(&pb), &target)), norm2(&target));
        if trace_e > 1e-8 {
            return Err(Error::Constraint {
                constraint: "electric trace data on Γ1 (no gradient field matches -k h_trace)",
                residual: trace_e,
                tol: 1e-8,
            });
        }
        for (k, &n) in bnodes.iter().enumerate() {
            phi_full[n] = pb[k];
        }
    }
    let gi = model.grad_interior();
    let m_eps = &model.masses.m_eps;
    let kmat = gi.transpose().matmul(&m_eps.matmul(&gi));
    let h3 = h.powi(3);
    let eb = model.complex.g.mul_vec(&phi_full);
    let load = gi.transpose_mul_vec(&m_eps.mul_vec(&eb));
    let rhs: Vec<f64> = rho.iter().zip(&load).map(|(r, l)| -h3 * r - l).collect();
    let mut pi = vec![0.0; gi.ncols()];
    conjugate_gradient(&kmat, Some(&kmat.diagonal()), &rhs, &mut pi, POISSON)?;
    for (k, &n) in model.interior_nodes.iter().enumerate() {
        phi_full[n] += pi[k];
    }
    let mut e = model.complex.g.mul_vec(&phi_full);
    let he = cohom_e.project(m_eps, &e);
    axpy(-1.0, &he, &mut e);

    // magnetic part
    let (mut hfield, trace_h) = match data {
        None => (vec![0.0; dm.n_faces()], 0.0),
        Some(t) => magnetic_with_trace(model, t)?,
    };
    let hh = cohom_h.project(&model.masses.m_mu, &hfield);
    axpy(-1.0, &hh, &mut hfield);

    let d = m_eps.mul_vec(&e);
    let div = model.nodal_divergence(&d);
    let gauss_e = rel(norm2(&sub(&div, rho)), norm2(rho) + norm2(&d) / (h3 * h));
    let curl_e = rel(norm2(&model.complex.c.mul_vec(&e)), norm2(&e) / h);
    let b = magnetic_flux(model, &hfield);
    let div_b = rel(norm2(&model.complex.d.mul_vec(&b)), norm2(&b) / h);
    Ok(EquilibriumState {
        e,
        h: hfield,
        residuals: EquilibriumResiduals {
            gauss_e,
            curl_e,
            div_b,
            trace: (trace_e, trace_h),
        },
    })
}

/// `k t` on the Γ1 trace space.
fn feedback_times(model: &Model, t: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for i in 0..t.len() / 2 {
        let k = model.materials.feedback.at(i);
        out[2 * i] = k[0][0] * t[2 * i] + k[0][1] * t[2 * i + 1];
        out[2 * i + 1] = k[1][0] * t[2 * i] + k[1][1] * t[2 * i + 1];
    }
    out
}

/// Magnetic flux `b = W⁻¹ M_μ h` with the mass restricted to the faces off
/// Γ0, returned at full length.
pub fn magnetic_flux(model: &Model, h: &[f64]) -> Vec<f64> {
    let faces = &model.free.faces;
    let m = model.masses.m_mu.submatrix(faces, faces);
    let hr: Vec<f64> = faces.iter().map(|&f| h[f]).collect();
    let br = m.mul_vec(&hr);
    let mut b = vec![0.0; h.len()];
    for (k, &f) in faces.iter().enumerate() {
        b[f] = br[k] / model.masses.face_weights[f];
    }
    b
}

/// Curl-free, μ-divergence-free `H` whose weak tangential trace on Γ1 is
/// `t`, by a dense least-squares solve. Returns the field and the relative
/// least-squares residual.
pub fn magnetic_with_trace(model: &Model, t: &[f64]) -> Result<(Vec<f64>, f64)> {
    let faces = &model.free.faces;
    let edges = &model.free.edges;
    let n = faces.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "magnetostatic trace problem",
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let w = &model.masses.face_weights;
    let ctw = model.complex.c.transpose().scale_cols(w).submatrix(edges, faces);
    let winv: Vec<f64> = faces.iter().map(|&f| 1.0 / w[f]).collect();
    let cells: Vec<usize> = (0..model.dofmap.n_cells()).collect();
    let div = model
        .complex
        .d
        .submatrix(&cells, faces)
        .scale_cols(&winv)
        .matmul(&model.masses.m_mu.submatrix(faces, faces));
    // boundary term of the weak curl with the trace replaced by the data
    let tt = model.complex.t_tau_gamma1();
    let h2 = model.spacing().powi(2);
    let load: Vec<f64> = tt.transpose_mul_vec(t).iter().map(|v| -h2 * v).collect();
    let rows = ctw.nrows() + div.nrows();
    let mut a = Mat::<f64>::zeros(rows, n);
    let mut rhs = Mat::<f64>::zeros(rows, 1);
    // rows are scaled by h so both blocks are of unit order
    let h = model.spacing();
    let s1 = 1.0 / h.powi(2);
    for (r, c, v) in ctw.triplets() {
        a[(r, c)] = v * s1;
    }
    for (k, &e) in edges.iter().enumerate() {
        rhs[(k, 0)] = load[e] * s1;
    }
    for (r, c, v) in div.triplets() {
        a[(ctw.nrows() + r, c)] = v * h;
    }
    let svd = a.thin_svd().map_err(|e| Error::Dense {
        what: "singular value decomposition",
        detail: format!("{e:?}"),
    })?;
    let smax = if n > 0 { svd.S()[0] } else { 0.0 };
    let u = svd.U();
    let v = svd.V();
    let mut x = vec![0.0; n];
    for j in 0..n.min(rows) {
        let s = svd.S()[j];
        if s <= 1e-10 * smax {
            continue;
        }
        let coef = (0..rows).map(|i| u[(i, j)] * rhs[(i, 0)]).sum::<f64>() / s;
        for i in 0..n {
            x[i] += coef * v[(i, j)];
        }
    }
    let mut resid = 0.0;
    let mut rn = 0.0;
    for i in 0..rows {
        let ax: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
        resid += (ax - rhs[(i, 0)]).powi(2);
        rn += rhs[(i, 0)].powi(2);
    }
    let trace_h = rel(resid.sqrt(), rn.sqrt());
    if trace_h > 1e-8 {
        return Err(Error::Constraint {
            constraint: "magnetic trace data on Γ1 (no static field matches h_trace)",
            residual: trace_h,
            tol: 1e-8,
        });
    }
    let mut hfull = vec![0.0; model.dofmap.n_faces()];
    for (k, &f) in faces.iter().enumerate() {
        hfull[f] = x[k];
    }
    Ok((hfull, trace_h))
}

/// Result of splitting initial data.
#[derive(Clone, Debug)]
pub struct Split {
    /// Equilibrium absorbing the charge and the harmonic components.
    pub equilibrium: EquilibriumState,
    /// Dynamic electric field (full length over edges).
    pub e: Vec<f64>,
    /// Dynamic magnetic field (full length over faces).
    pub h: Vec<f64>,
}

/// Relative tolerance for the Gauss laws of supplied initial data.
pub const GAUSS_TOL: f64 = 1e-8;

/// Splits `(e0, h0)` into an equilibrium and a dynamic part in the state
/// space: divergence-free fluxes orthogonal to the harmonic fields.
pub fn split_initial(
    model: &Model,
    e0: &[f64],
    h0: &[f64],
    rho: &[f64],
    cohom_e: &CohomologyBasis,
    cohom_h: &CohomologyBasis,
) -> Result<Split> {
    let dm = &model.dofmap;
    let h = model.spacing();
    check_support(dm, e0, &model.free.edges, dm.n_edges(), "πτE = 0 on Γ0")?;
    check_support(dm, h0, &model.free.faces, dm.n_faces(), "ν·B = 0 on Γ0")?;
    let d0 = model.masses.m_eps.mul_vec(e0);
    let div = model.nodal_divergence(&d0);
    let gauss = rel(norm2(&sub(&div, rho)), norm2(rho) + norm2(&d0) / h.powi(4));
    if gauss > GAUSS_TOL {
        return Err(Error::Constraint {
            constraint: "Gauss law div εE = ρ at interior nodes",
            residual: gauss,
            tol: GAUSS_TOL,
        });
    }
    let b0 = magnetic_flux(model, h0);
    let divb = rel(norm2(&model.complex.d.mul_vec(&b0)), norm2(&b0) / h);
    if divb > GAUSS_TOL {
        return Err(Error::Constraint {
            constraint: "Gauss law div μH = 0 on cells",
            residual: divb,
            tol: GAUSS_TOL,
        });
    }
    let mut eq = solve_equilibrium(model, rho, None, cohom_e, cohom_h)?;
    let mut e = sub(e0, &eq.e);
    let he = cohom_e.project(&model.masses.m_eps, &e);
    axpy(-1.0, &he, &mut e);
    axpy(1.0, &he, &mut eq.e);
    let hm = cohom_h.project(&model.masses.m_mu, h0);
    let hd = sub(h0, &hm);
    axpy(1.0, &hm, &mut eq.h);
    // strips solver residue that would otherwise carry charge
    let (e, hd) = project_dynamic(model, &e, &hd, cohom_e, cohom_h)?;
    Ok(Split {
        equilibrium: eq,
        e,
        h: hd,
    })
}

fn check_support(dm: &DofMap, x: &[f64], kept: &[usize], n: usize, what: &'static str) -> Result<()> {
    let _ = dm;
    if x.len() != n {
        return Err(Error::Invalid(format!("field has {} entries, expected {n}", x.len())));
    }
    let total: f64 = x.iter().map(|v| v * v).sum();
    let inside: f64 = kept.iter().map(|&i| x[i] * x[i]).sum();
    let r = rel((total - inside).max(0.0).sqrt(), total.sqrt());
    if r > 1e-12 {
        return Err(Error::Constraint {
            constraint: what,
            residual: r,
            tol: 1e-12,
        });
    }
    Ok(())
}

/// Orthogonal projection (in the energy product) of an arbitrary pair of
/// fields on the free DOFs onto the dynamic state space.
pub fn project_dynamic(
    model: &Model,
    e: &[f64],
    h: &[f64],
    cohom_e: &CohomologyBasis,
    cohom_h: &CohomologyBasis,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let all: Vec<usize> = (0..model.dofmap.boundary_faces().len()).collect();
    let es = CarrierSpace::edges(model, &model.masses.m_eps, &model.complex.gamma0_faces, &all);
    let er = es.restrict(e)?;
    let (g, _) = es.gradient_part(&er)?;
    let mut eo = es.extend(&sub(&er, &g));
    let he = cohom_e.project(&model.masses.m_eps, &eo);
    axpy(-1.0, &he, &mut eo);

    let hs = CarrierSpace::faces(model, &model.masses.m_mu, &model.complex.gamma0_faces);
    let hr = hs.restrict(h)?;
    let (g, _) = hs.gradient_part(&hr)?;
    let mut ho = hs.extend(&sub(&hr, &g));
    let hh = cohom_h.project(&model.masses.m_mu, &ho);
    axpy(-1.0, &hh, &mut ho);
    Ok((eo, ho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoxSide, GridSpec, PartitionRule};
    use crate::materials::Materials;

    fn model(n: usize, rule: PartitionRule) -> Model {
        Model::new(&GridSpec::unit_cube(n), &rule, Materials::vacuum(1.0)).unwrap()
    }

    #[test]
    fn box_has_no_harmonic_fields() {
        let m = model(3, PartitionRule::gamma1_sides(&[BoxSide::XMAX]));
        let ce = compute_cohomology(&m, Which::E, 1e-8).unwrap();
        let ch = compute_cohomology(&m, Which::H, 1e-8).unwrap();
        assert_eq!((ce.dim(), ch.dim()), (0, 0));
        assert!(ce.gap_ratio > 100.0 && ch.gap_ratio > 100.0);
    }

    #[test]
    fn zero_data_gives_zero_equilibrium() {
        let m = model(3, PartitionRule::gamma1_sides(&[BoxSide::XMAX]));
        let ce = compute_cohomology(&m, Which::E, 1e-8).unwrap();
        let ch = compute_cohomology(&m, Which::H, 1e-8).unwrap();
        let rho = vec![0.0; m.interior_nodes.len()];
        let eq = solve_equilibrium(&m, &rho, None, &ce, &ch).unwrap();
        assert!(eq.e.iter().chain(&eq.h).all(|v| *v == 0.0));
    }

    #[test]
    fn point_charge_equilibrium() {
        let m = model(4, PartitionRule::undamped());
        let ce = compute_cohomology(&m, Which::E, 1e-8).unwrap();
        let ch = compute_cohomology(&m, Which::H, 1e-8).unwrap();
        let mut rho = vec![0.0; m.interior_nodes.len()];
        rho[13] = 1.0;
        let eq = solve_equilibrium(&m, &rho, None, &ce, &ch).unwrap();
        assert!(eq.residuals.gauss_e < 1e-10, "{:?}", eq.residuals);
        assert!(eq.residuals.curl_e < 1e-14, "{:?}", eq.residuals);
    }
}
