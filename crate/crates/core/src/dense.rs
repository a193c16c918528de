//! Dense linear algebra on top of faer: null spaces by singular-value
//! thresholding and orthonormalization in a mass-matrix inner product.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug)]
pub struct NullSpace {
    /// Orthonormal (Euclidean) basis, one column per null direction.
    pub basis: Mat<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Absolute cut below which a singular value counts as zero.
    pub threshold: f64,
    /// Smallest retained singular value over the largest discarded one (or
    /// over the threshold when nothing is discarded).
    pub gap_ratio: f64,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Singular values around the cut, for diagnostics.
    pub fn tail(&self, width: usize) -> Vec<f64> {
        let rank = self.singular_values.iter().filter(|s| **s > self.threshold).count();
        let lo = rank.saturating_sub(width);
        let hi = (rank + width).min(self.singular_values.len());
        self.singular_values[lo..hi].to_vec()
    }
}

/// Null space of `a` with a cut at `rel_tol · σ_max`. Rows are normalized
/// first so that stacked blocks of different scale are weighted alike.
pub fn null_space(a: MatRef<'_, f64>, rel_tol: f64) -> Result<NullSpace> {
    let (m, n) = (a.nrows(), a.ncols());
    let rows = m.max(n);
    let mut scaled = Mat::<f64>::zeros(rows, n);
    for i in 0..m {
        let norm = (0..n).map(|j| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..n {
                scaled[(i, j)] = a[(i, j)] / norm;
            }
        }
    }
    let svd = scaled.thin_svd().map_err(|e| Error::Dense {
        what: "singular value decomposition",
        detail: format!("{e:?}"),
    })?;
    let s: Vec<f64> = (0..n).map(|i| svd.S()[i]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax.max(f64::MIN_POSITIVE);
    let rank = s.iter().filter(|v| **v > threshold).count();
    let above = if rank > 0 { s[rank - 1] } else { 0.0 };
    let below = if rank < n { s[rank] } else { threshold };
    let gap_ratio = if below > 0.0 { above / below } else { f64::INFINITY };
    let v = svd.V();
    let basis = Mat::from_fn(n, n - rank, |i, j| v[(i, rank + j)]);
    Ok(NullSpace {
        basis,
        singular_values: s,
        threshold,
        gap_ratio,
    })
}

/// `M · X` for sparse `M` and dense `X`.
pub fn sparse_times(m: &CsrMatrix, x: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(m.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col: Vec<f64> = (0..x.nrows()).map(|i| x[(i, j)]).collect();
        let y = m.mul_vec(&col);
        for (i, v) in y.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Returns `Q = N L⁻ᵀ` with `Nᵀ M N = L Lᵀ`, so that `Qᵀ M Q = I`.
pub fn m_orthonormalize(n: MatRef<'_, f64>, mass: &CsrMatrix) -> Result<Mat<f64>> {
    if n.ncols() == 0 {
        return Ok(Mat::zeros(n.nrows(), 0));
    }
    let mn = sparse_times(mass, n);
    let gram = n.transpose() * &mn;
    let gram = Mat::from_fn(gram.nrows(), gram.ncols(), |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
    let llt = gram.llt(Side::Lower).map_err(|e| Error::Dense {
        what: "Cholesky factorization of a Gram matrix",
        detail: format!("{e:?}"),
    })?;
    let l = llt.L().to_owned();
    let mut x = n.transpose().to_owned();
    l.solve_lower_triangular_in_place(x.as_mut());
    Ok(x.transpose().to_owned())
}

/// Column `j` of `m` as a vector.
pub fn column(m: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Solves the SPD system `a x = b` densely.
pub fn spd_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let llt = a.llt(Side::Lower).map_err(|e| Error::Dense {
        what: "Cholesky factorization",
        detail: format!("{e:?}"),
    })?;
    let mut x = b.to_owned();
    llt.solve_in_place(x.as_mut());
    Ok(x)
}
