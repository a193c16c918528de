//! Spectrum of the generator on the dynamic state space, resolvent sweeps
//! along the imaginary axis and the unique-continuation diagnostics.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::{self, sparse_times};
use crate::dynamics::{Generator, State};
use crate::error::{Error, Result};
use crate::krylov::conjugate_gradient;
use crate::model::Model;
use crate::sparse::CsrMatrix;
use crate::statics::CohomologyBasis;

/// Largest restricted dimension handled densely.
pub const DENSE_LIMIT: usize = 6000;
/// Eigenvalues below this modulus are treated as kernel.
pub const ZERO_THRESHOLD: f64 = 1e-6;

/// H-orthonormal basis of the dynamic state space, block diagonal in (e, h).
#[derive(Clone, Debug)]
pub struct XhBasis {
    /// `n_e × r_e`, with `Q_eᵀ M_ε Q_e = I`.
    pub qe: Mat<f64>,
    /// `n_h × r_h`, with `Q_hᵀ M_μ Q_h = I`.
    pub qh: Mat<f64>,
    /// Singular-value gap ratios of the two constraint systems.
    pub gap: (f64, f64),
}

impl XhBasis {
    pub fn dim(&self) -> usize {
        self.qe.ncols() + self.qh.ncols()
    }

    /// Coordinates to a state on the free DOFs (real part).
    pub fn lift(&self, y: &[f64]) -> State {
        let re = self.qe.ncols();
        let e = (0..self.qe.nrows())
            .map(|i| (0..re).map(|j| self.qe[(i, j)] * y[j]).sum())
            .collect();
        let h = (0..self.qh.nrows())
            .map(|i| (0..self.qh.ncols()).map(|j| self.qh[(i, j)] * y[re + j]).sum())
            .collect();
        State { e, h }
    }

    /// Complex coordinates to the real and imaginary states.
    pub fn lift_complex(&self, y: &[c64]) -> (State, State) {
        let re: Vec<f64> = y.iter().map(|v| v.re).collect();
        let im: Vec<f64> = y.iter().map(|v| v.im).collect();
        (self.lift(&re), self.lift(&im))
    }

    /// Coordinates of a state already in the space: `Qᵀ P x`.
    pub fn coordinates(&self, gen: &Generator, x: &State) -> Vec<f64> {
        let me = gen.m_eps.mul_vec(&x.e);
        let mh = gen.m_mu.mul_vec(&x.h);
        let mut y: Vec<f64> = (0..self.qe.ncols())
            .map(|j| (0..me.len()).map(|i| self.qe[(i, j)] * me[i]).sum())
            .collect();
        y.extend((0..self.qh.ncols()).map(|j| (0..mh.len()).map(|i| self.qh[(i, j)] * mh[i]).sum::<f64>()));
        y
    }
}

fn stack_dense(blocks: &[&CsrMatrix], ncols: usize) -> Mat<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::<f64>::zeros(rows, ncols);
    let mut off = 0;
    for b in blocks {
        for (r, c, v) in b.triplets() {
            out[(off + r, c)] = v;
        }
        off += b.nrows();
    }
    out
}

fn restricted_columns(basis: &CohomologyBasis, dofs: &[usize]) -> CsrMatrix {
    let pos: std::collections::HashMap<usize, usize> = dofs.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut trip = Vec::new();
    for j in 0..basis.dim() {
        for (k, &i) in basis.dofs.iter().enumerate() {
            let v = basis.basis[(k, j)];
            if v != 0.0 {
                let col = *pos.get(&i).expect("harmonic field supported on free DOFs");
                trip.push((j, col, v));
            }
        }
    }
    CsrMatrix::from_triplets(basis.dim(), dofs.len(), &trip)
}

/// Builds the dynamic state space: electric fields with vanishing interior
/// Gauss law and magnetic fluxes with vanishing divergence, both orthogonal
/// to the harmonic fields.
pub fn xh_basis(gen: &Generator, cohom_e: &CohomologyBasis, cohom_h: &CohomologyBasis, rel_tol: f64) -> Result<XhBasis> {
    let (ne, nh) = (gen.n_e(), gen.n_h());
    if ne.max(nh) > DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "dense state-space basis",
            size: ne.max(nh),
            limit: DENSE_LIMIT,
        });
    }
    let ge = gen.g_int.transpose().matmul(&gen.m_eps);
    let ve = restricted_columns(cohom_e, &gen.edges).matmul(&gen.m_eps);
    let ns_e = dense::null_space(stack_dense(&[&ge, &ve], ne).as_ref(), rel_tol)?;
    let winv: Vec<f64> = gen.w.iter().map(|w| 1.0 / w).collect();
    let dh = gen.div.scale_cols(&winv).matmul(&gen.m_mu);
    let vh = restricted_columns(cohom_h, &gen.faces).matmul(&gen.m_mu);
    let ns_h = dense::null_space(stack_dense(&[&dh, &vh], nh).as_ref(), rel_tol)?;
    Ok(XhBasis {
        qe: dense::m_orthonormalize(ns_e.basis.as_ref(), &gen.m_eps)?,
        qh: dense::m_orthonormalize(ns_h.basis.as_ref(), &gen.m_mu)?,
        gap: (ns_e.gap_ratio, ns_h.gap_ratio),
    })
}

/// `A` in the coordinates of an H-orthonormal basis: `Qᵀ S Q`.
pub fn restricted_matrix(gen: &Generator, basis: &XhBasis) -> Mat<f64> {
    let (re, rh) = (basis.qe.ncols(), basis.qh.ncols());
    let rq = sparse_times(&gen.r, basis.qe.as_ref());
    let ee = basis.qe.transpose() * &rq;
    let cq = sparse_times(&gen.ctw, basis.qh.as_ref());
    let eh = basis.qe.transpose() * &cq;
    let mut a = Mat::<f64>::zeros(re + rh, re + rh);
    for i in 0..re {
        for j in 0..re {
            a[(i, j)] = -ee[(i, j)];
        }
        for j in 0..rh {
            a[(i, re + j)] = eh[(i, j)];
            a[(re + j, i)] = -eh[(i, j)];
        }
    }
    a
}

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Dense,
    ShiftInvert { shifts: Vec<c64>, krylov_dim: usize },
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<c64>,
    /// `‖A v − λ v‖_H / ‖v‖_H` per eigenvalue.
    pub residuals: Vec<f64>,
    pub method: Method,
    pub notes: Vec<String>,
}

impl SpectrumReport {
    pub fn abscissa(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_re(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re.abs()).fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Largest distance from an eigenvalue's conjugate to the nearest
    /// eigenvalue.
    pub fn conjugation_defect(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| {
                self.eigenvalues
                    .iter()
                    .map(|m| (l.conj() - m).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest nonzero `|Im λ|`.
    pub fn lowest_frequency(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|l| l.norm() > ZERO_THRESHOLD)
            .map(|l| l.im.abs())
            .filter(|w| *w > ZERO_THRESHOLD)
            .fold(None, |m, w| Some(m.map_or(w, |m: f64| m.min(w))))
    }

    /// `(|Im λ|, −Re λ)` pairs sorted by frequency, one per conjugate pair.
    pub fn decay_table(&self) -> Vec<(f64, f64)> {
        let mut t: Vec<(f64, f64)> = self
            .eigenvalues
            .iter()
            .filter(|l| l.im >= 0.0)
            .map(|l| (l.im, -l.re))
            .collect();
        t.sort_by(|a, b| a.0.total_cmp(&b.0));
        t
    }
}

/// Per-band minimum damping of a decay table split into `bands` groups of
/// equal size by frequency.
pub fn band_minima(table: &[(f64, f64)], bands: usize) -> Vec<(f64, f64, f64)> {
    let n = table.len();
    let bands = bands.clamp(1, n.max(1));
    (0..bands)
        .filter_map(|b| {
            let lo = b * n / bands;
            let hi = (b + 1) * n / bands;
            let slice = &table[lo..hi];
            if slice.is_empty() {
                return None;
            }
            let min = slice.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            Some((slice[0].0, slice[slice.len() - 1].0, min))
        })
        .collect()
}

fn complex_residuals(a: MatRef<'_, f64>, values: &[c64], vectors: MatRef<'_, c64>) -> Vec<f64> {
    let n = a.nrows();
    let ac = Mat::<c64>::from_fn(n, n, |i, j| c64::new(a[(i, j)], 0.0));
    let av = &ac * vectors;
    (0..values.len())
        .map(|k| {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += (av[(i, k)] - values[k] * vectors[(i, k)]).norm_sqr();
                den += vectors[(i, k)].norm_sqr();
            }
            (num / den).sqrt()
        })
        .collect()
}

/// Dense eigendecomposition of a restricted generator matrix.
pub fn dense_spectrum(a: &Mat<f64>) -> Result<(SpectrumReport, Mat<c64>)> {
    if a.nrows() > DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "dense eigensolve",
            size: a.nrows(),
            limit: DENSE_LIMIT,
        });
    }
    let evd = a.eigen().map_err(|e| Error::Dense {
        what: "eigendecomposition",
        detail: format!("{e:?}"),
    })?;
    let mut values: Vec<c64> = (0..a.nrows()).map(|i| evd.S()[i]).collect();
    let mut vectors = evd.U().to_owned();
    let mut residuals = complex_residuals(a.as_ref(), &values, vectors.as_ref());
    let mut notes = Vec::new();
    let scale = values.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > 1e-10 * scale {
        // the real path loses eigenvectors of exactly repeated complex pairs
        let n = a.nrows();
        let ac = Mat::<c64>::from_fn(n, n, |i, j| c64::new(a[(i, j)], 0.0));
        let evd = ac.eigen().map_err(|e| Error::Dense {
            what: "complex eigendecomposition",
            detail: format!("{e:?}"),
        })?;
        values = (0..n).map(|i| evd.S()[i]).collect();
        vectors = evd.U().to_owned();
        residuals = complex_residuals(a.as_ref(), &values, vectors.as_ref());
        notes.push(format!(
            "real eigensolver residual {worst:.2e}; recomputed in complex arithmetic"
        ));
    }
    Ok((
        SpectrumReport {
            eigenvalues: values,
            residuals,
            method: Method::Dense,
            notes,
        },
        vectors,
    ))
}

/// Norm of the Γ1 tangential trace of the electric part of eigenvectors whose
/// eigenvalue lies within `tol` of the imaginary axis.
pub fn near_imaginary_traces(
    gen: &Generator,
    basis: &XhBasis,
    report: &SpectrumReport,
    vectors: &Mat<c64>,
    tol: f64,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (k, l) in report.eigenvalues.iter().enumerate() {
        if l.re.abs() < tol {
            let y: Vec<c64> = (0..vectors.nrows()).map(|i| vectors[(i, k)]).collect();
            let (re, im) = basis.lift_complex(&y);
            let a = gen.t_tau.mul_vec(&re.e);
            let b = gen.t_tau.mul_vec(&im.e);
            let n: f64 = a.iter().chain(&b).map(|v| v * v).sum::<f64>().sqrt();
            out.push((k, n));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftInvertOptions {
    /// Target frequencies; each shift is `iω`.
    pub omegas: Vec<f64>,
    /// Eigenvalues kept per shift.
    pub nev: usize,
    pub krylov_dim: usize,
    pub tol: f64,
    pub seed: u64,
}

impl ShiftInvertOptions {
    pub fn new(omegas: Vec<f64>, nev: usize) -> Self {
        Self {
            omegas,
            nev,
            krylov_dim: 80,
            tol: 1e-8,
            seed: 0,
        }
    }
}

fn cdot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[c64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues nearest to `iω` for each target, by shift-invert Arnoldi on
/// the pencil `(S, P)` over all free DOFs. The starting vector lies in the
/// range of `A`, which keeps the kernel of gradient fields out of the
/// Krylov space; any kernel Ritz values are dropped.
pub fn shift_invert_spectrum(gen: &Generator, opts: &ShiftInvertOptions) -> Result<SpectrumReport> {
    let s = gen.s_matrix();
    let p = gen.p_matrix();
    let n = gen.dim();
    let results: Vec<Result<(Vec<c64>, Vec<f64>, c64, Option<String>)>> = opts
        .omegas
        .par_iter()
        .enumerate()
        .map(|(k, &omega)| {
            let mut sigma = c64::new(0.0, omega);
            let mut note = None;
            let mut attempt = 0;
            let lu = loop {
                let mut trip: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(s.nnz() + p.nnz());
                for (r, c, v) in s.triplets() {
                    trip.push(Triplet::new(r, c, c64::new(v, 0.0)));
                }
                for (r, c, v) in p.triplets() {
                    trip.push(Triplet::new(r, c, -sigma * v));
                }
                let k_mat = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &trip).map_err(|e| Error::Dense {
                    what: "sparse assembly",
                    detail: format!("{e:?}"),
                })?;
                match k_mat.sp_lu() {
                    Ok(lu) => break lu,
                    Err(e) if attempt < 3 => {
                        attempt += 1;
                        sigma += c64::new(0.0, 1e-6 * (1.0 + omega.abs()));
                        note = Some(format!("shift {omega} moved to {} after factorization failure ({e:?})", sigma.im));
                    }
                    Err(e) => {
                        return Err(Error::Dense {
                            what: "sparse LU factorization",
                            detail: format!("{e:?}"),
                        })
                    }
                }
            };
            let apply = |v: &[c64]| -> Vec<c64> {
                let mut rhs = Mat::<c64>::zeros(n, 1);
                for (r, row) in (0..n).map(|r| (r, p.row(r))) {
                    let mut acc = c64::new(0.0, 0.0);
                    for (c, val) in row {
                        acc += v[c] * val;
                    }
                    rhs[(r, 0)] = acc;
                }
                lu.solve_in_place(rhs.as_mut());
                (0..n).map(|i| rhs[(i, 0)]).collect()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
            let x0 = crate::dynamics::random_free_state(gen, &mut rng);
            let sx = gen.s_apply(&x0);
            let ax = State {
                e: gen.solve_eps(&sx.e, None)?,
                h: gen.solve_mu(&sx.h, None)?,
            };
            let mut v0: Vec<c64> = ax.e.iter().chain(&ax.h).map(|&v| c64::new(v, rng.gen_range(-1e-3..1e-3) * v)).collect();
            let nv = cnorm(&v0);
            v0.iter_mut().for_each(|v| *v /= nv);
            let m = opts.krylov_dim.min(n - 1).max(2);
            let mut basis = vec![v0];
            let mut hess = Mat::<c64>::zeros(m + 1, m);
            let mut steps = m;
            for j in 0..m {
                let mut w = apply(&basis[j]);
                for _ in 0..2 {
                    for (i, vi) in basis.iter().enumerate() {
                        let hij = cdot(vi, &w);
                        hess[(i, j)] += hij;
                        w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
                    }
                }
                let wn = cnorm(&w);
                hess[(j + 1, j)] = c64::new(wn, 0.0);
                if wn < 1e-14 {
                    steps = j + 1;
                    break;
                }
                basis.push(w.into_iter().map(|v| v / wn).collect());
            }
            let hm = Mat::<c64>::from_fn(steps, steps, |i, j| hess[(i, j)]);
            let evd = hm.eigen().map_err(|e| Error::Dense {
                what: "Hessenberg eigendecomposition",
                detail: format!("{e:?}"),
            })?;
            let mut cands: Vec<(c64, Vec<c64>)> = Vec::new();
            for i in 0..steps {
                let theta = evd.S()[i];
                if theta.norm() < 1e-300 {
                    continue;
                }
                let lambda = sigma + theta.inv();
                let y: Vec<c64> = (0..steps).map(|r| evd.U()[(r, i)]).collect();
                let mut x = vec![c64::new(0.0, 0.0); n];
                for (r, yr) in y.iter().enumerate() {
                    x.iter_mut().zip(&basis[r]).for_each(|(a, b)| *a += yr * b);
                }
                cands.push((lambda, x));
            }
            cands.sort_by(|a, b| (a.0 - sigma).norm().total_cmp(&(b.0 - sigma).norm()));
            let mut vals = Vec::new();
            let mut res = Vec::new();
            for (lambda, x) in cands {
                if vals.len() >= opts.nev {
                    break;
                }
                if lambda.norm() < ZERO_THRESHOLD {
                    continue;
                }
                let r = pencil_residual(gen, &s, &p, lambda, &x)?;
                if r < opts.tol {
                    vals.push(lambda);
                    res.push(r);
                }
            }
            Ok((vals, res, sigma, note))
        })
        .collect();
    let mut eigenvalues = Vec::new();
    let mut residuals = Vec::new();
    let mut shifts = Vec::new();
    let mut notes = Vec::new();
    for r in results {
        let (v, res, sigma, note) = r?;
        for (l, rr) in v.into_iter().zip(res) {
            if !eigenvalues.iter().any(|m: &c64| (*m - l).norm() < 1e-9 * (1.0 + l.norm())) {
                eigenvalues.push(l);
                residuals.push(rr);
            }
        }
        shifts.push(sigma);
        notes.extend(note);
    }
    Ok(SpectrumReport {
        eigenvalues,
        residuals,
        method: Method::ShiftInvert {
            shifts,
            krylov_dim: opts.krylov_dim,
        },
        notes,
    })
}

/// `‖P⁻¹(S x − λ P x)‖_P / ‖x‖_P`.
fn pencil_residual(gen: &Generator, s: &CsrMatrix, p: &CsrMatrix, lambda: c64, x: &[c64]) -> Result<f64> {
    let xr: Vec<f64> = x.iter().map(|v| v.re).collect();
    let xi: Vec<f64> = x.iter().map(|v| v.im).collect();
    let (sr, si) = (s.mul_vec(&xr), s.mul_vec(&xi));
    let (pr, pi) = (p.mul_vec(&xr), p.mul_vec(&xi));
    let rr: Vec<f64> = (0..x.len()).map(|i| sr[i] - (lambda.re * pr[i] - lambda.im * pi[i])).collect();
    let ri: Vec<f64> = (0..x.len()).map(|i| si[i] - (lambda.re * pi[i] + lambda.im * pr[i])).collect();
    let diag = p.diagonal();
    let mut num = 0.0;
    for r in [&rr, &ri] {
        let mut z = vec![0.0; r.len()];
        conjugate_gradient(p, Some(&diag), r, &mut z, crate::dynamics::MASS)?;
        num += crate::sparse::dot(r, &z);
    }
    let den = crate::sparse::dot(&xr, &pr) + crate::sparse::dot(&xi, &pi);
    let _ = gen;
    Ok((num.max(0.0) / den).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSweep {
    pub omegas: Vec<f64>,
    /// Smallest singular value of `iω − A` in the H geometry; `None` when the
    /// singular value solver failed at that frequency.
    pub sigma_min: Vec<Option<f64>>,
}

impl ResolventSweep {
    pub fn resolvent_norms(&self) -> Vec<Option<f64>> {
        self.sigma_min.iter().map(|s| s.map(|s| 1.0 / s)).collect()
    }
}

/// `σ_min(iω − A)` for each `ω`, with `A` given in H-orthonormal coordinates.
pub fn resolvent_sweep(a: &Mat<f64>, omegas: &[f64]) -> ResolventSweep {
    let n = a.nrows();
    let sigma_min = omegas
        .par_iter()
        .map(|&omega| {
            let m = Mat::<c64>::from_fn(n, n, |i, j| {
                let d = if i == j { c64::new(0.0, omega) } else { c64::new(0.0, 0.0) };
                d - c64::new(a[(i, j)], 0.0)
            });
            m.singular_values().ok().and_then(|s| s.last().copied())
        })
        .collect();
    ResolventSweep {
        omegas: omegas.to_vec(),
        sigma_min,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UcpReport {
    pub omega: f64,
    pub sigma_min: f64,
    pub patch_faces: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Smallest singular value of the time-harmonic system `(S − iωP) x = 0`,
/// in H-scaled unknowns, stacked with zero tangential Cauchy data
/// `πτE = 0`, `π×H = 0` on the patch (global face indices of boundary faces).
pub fn unique_continuation_test(model: &Model, gen: &Generator, omega: f64, patch: &[usize]) -> Result<UcpReport> {
    if omega == 0.0 {
        return Err(Error::Invalid("unique continuation test needs ω ≠ 0".into()));
    }
    let dm = &model.dofmap;
    let mut rows_b = Vec::new();
    for &f in patch {
        let b = dm
            .boundary_index(f)
            .ok_or_else(|| Error::Invalid(format!("patch face {f} at {:?} is not a boundary face", dm.face_center(f))))?;
        rows_b.push(2 * b);
        rows_b.push(2 * b + 1);
    }
    let n = gen.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "unique continuation system",
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let p = gen.p_matrix().to_dense();
    let llt = p.llt(Side::Lower).map_err(|e| Error::Dense {
        what: "Cholesky factorization of the energy mass",
        detail: format!("{e:?}"),
    })?;
    let l = llt.L().to_owned();
    // L⁻¹ S L⁻ᵀ
    let mut y = gen.s_matrix().to_dense();
    l.solve_lower_triangular_in_place(y.as_mut());
    let mut z = y.transpose().to_owned();
    l.solve_lower_triangular_in_place(z.as_mut());
    let scaled = z.transpose().to_owned();

    let h = model.spacing();
    let t_tau = model.complex.t_tau.submatrix(&rows_b, &gen.edges);
    let t_cross = model.complex.t_cross.submatrix(&rows_b, &gen.faces);
    let ne = gen.n_e();
    let mut trace = Mat::<f64>::zeros(2 * rows_b.len(), n);
    for (r, c, v) in t_tau.triplets() {
        trace[(r, c)] = h * v;
    }
    for (r, c, v) in t_cross.triplets() {
        trace[(rows_b.len() + r, ne + c)] = h * v;
    }
    // trace rows act on x = L⁻ᵀ y
    let mut tt = trace.transpose().to_owned();
    l.solve_lower_triangular_in_place(tt.as_mut());
    let trace_scaled = tt.transpose().to_owned();

    let rows = n + trace_scaled.nrows();
    let m = Mat::<c64>::from_fn(rows, n, |i, j| {
        if i < n {
            let d = if i == j { c64::new(0.0, omega) } else { c64::new(0.0, 0.0) };
            c64::new(scaled[(i, j)], 0.0) - d
        } else {
            c64::new(trace_scaled[(i - n, j)], 0.0)
        }
    });
    let s = m.singular_values().map_err(|e| Error::Dense {
        what: "singular values",
        detail: format!("{e:?}"),
    })?;
    Ok(UcpReport {
        omega,
        sigma_min: s.last().copied().unwrap_or(0.0),
        patch_faces: patch.len(),
        rows,
        cols: n,
    })
}

/// Boundary faces (global indices) lying in one plane of the bounding box.
pub fn side_faces(model: &Model, side: crate::grid::BoxSide) -> Vec<usize> {
    let dm = &model.dofmap;
    dm.boundary_faces()
        .iter()
        .filter(|b| {
            let (axis, p) = dm.face(b.face);
            let plane = if side.sign > 0 { dm.dims()[axis] } else { 0 };
            axis == side.axis && b.outward == side.sign && p[axis] == plane
        })
        .map(|b| b.face)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreeBallReport {
    pub radii: [f64; 3],
    /// `N(r)` for the three radii.
    pub norms: [f64; 3],
    /// Cells counted in each ball.
    pub cells: [usize; 3],
    /// `(τ, q(τ))`, with `None` when a zero factor makes the ratio infinite.
    pub ratios: Vec<(f64, Option<f64>)>,
}

/// Discrete three-ball ratios `q(τ) = N(r1) / (N(r0)^τ N(r2)^{1−τ})` of a
/// field pair (full-length edge and face vectors), with `N(r)` the cellwise
/// L² norm over cells whose centers lie within `r` of `center`.
pub fn three_ball_diagnostic(
    model: &Model,
    e: &[f64],
    h: &[f64],
    center: [f64; 3],
    radii: [f64; 3],
    taus: &[f64],
) -> Result<ThreeBallReport> {
    let dm = &model.dofmap;
    if !(radii[0] > 0.0 && radii[0] < radii[1] && radii[1] < radii[2]) {
        return Err(Error::Invalid(format!("radii must satisfy 0 < r0 < r1 < r2, got {radii:?}")));
    }
    let sp = dm.spacing();
    let dims = dm.dims();
    for a in 0..3 {
        if center[a] - radii[2] < 0.0 || center[a] + radii[2] > dims[a] as f64 * sp {
            return Err(Error::Invalid(format!("ball of radius {} around {center:?} leaves the domain", radii[2])));
        }
    }
    // every lattice cell whose center is within r2 must be active
    let r2 = radii[2];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let c = [(x as f64 + 0.5) * sp, (y as f64 + 0.5) * sp, (z as f64 + 0.5) * sp];
                let d2: f64 = (0..3).map(|a| (c[a] - center[a]).powi(2)).sum();
                if d2 <= r2 * r2 && dm.cell_id([x, y, z]).is_none() {
                    return Err(Error::Invalid(format!("ball of radius {r2} around {center:?} contains inactive cells")));
                }
            }
        }
    }
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    let vol = sp.powi(3);
    for c in 0..dm.n_cells() {
        let x = dm.cell_center(c);
        let d2: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum();
        if d2 > r2 * r2 {
            continue;
        }
        let edges = dm.cell_edges(c);
        let faces = dm.cell_faces(c);
        let mut v = 0.0;
        for a in 0..3 {
            let ea: f64 = edges[a].iter().map(|&i| e[i]).sum::<f64>() / 4.0;
            let ha: f64 = faces[a].iter().map(|&i| h[i]).sum::<f64>() / 2.0;
            v += ea * ea + ha * ha;
        }
        for k in 0..3 {
            if d2 <= radii[k] * radii[k] {
                sums[k] += v * vol;
                counts[k] += 1;
            }
        }
    }
    let norms = sums.map(f64::sqrt);
    let ratios = taus
        .iter()
        .map(|&t| {
            let den = norms[0].powf(t) * norms[2].powf(1.0 - t);
            let q = if den > 0.0 { Some(norms[1] / den) } else { None };
            (t, q)
        })
        .collect();
    Ok(ThreeBallReport {
        radii,
        norms,
        cells: counts,
        ratios,
    })
}
