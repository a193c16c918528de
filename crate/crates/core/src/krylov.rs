//! Matrix-free Krylov solvers: Jacobi-preconditioned conjugate gradients for
//! the SPD mass and Poisson systems, restarted GMRES for the nonsymmetric
//! implicit-midpoint systems.

use crate::sparse::{axpy, dot, norm2, CsrMatrix};
use thiserror::Error;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F: Fn(&[f64], &mut [f64])> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub const fn new(rel_tol: f64, max_iter: usize) -> Self {
        Self { rel_tol, max_iter }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("{method} did not converge in {iterations} iterations (relative residual {rel_residual:.3e}, history tail {history:?})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        rel_residual: f64,
        history: Vec<f64>,
    },
    #[error("conjugate gradients broke down: operator not positive definite on the Krylov space (pAp = {0:.3e})")]
    Indefinite(f64),
}

fn jacobi_inverse(diag: &[f64]) -> Vec<f64> {
    diag.iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

fn tail(history: &[f64]) -> Vec<f64> {
    history[history.len().saturating_sub(8)..].to_vec()
}

/// Preconditioned conjugate gradients. `x` holds the initial guess on entry.
///
/// Consistent right-hand sides of positive semidefinite systems are accepted;
/// the iterate then converges to a solution that differs from the minimum-norm
/// one only by the kernel component of the initial guess.
pub fn conjugate_gradient(
    op: &dyn LinearOperator,
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveStats, KrylovError> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let minv = diag.map(jacobi_inverse);
    let precondition = |r: &[f64], z: &mut [f64]| match &minv {
        Some(m) => z.iter_mut().zip(r).zip(m).for_each(|((zi, ri), mi)| *zi = ri * mi),
        None => z.copy_from_slice(r),
    };

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    let mut rel = norm2(&r) / bnorm;
    history.push(rel);
    let mut it = 0;
    while rel > opts.rel_tol {
        if it >= opts.max_iter {
            return Err(KrylovError::NotConverged {
                method: "conjugate gradients",
                iterations: it,
                rel_residual: rel,
                history: tail(&history),
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            if rel < 1e3 * opts.rel_tol {
                break;
            }
            return Err(KrylovError::Indefinite(pap));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        // recompute the true residual now and then so that the reported
        // residual does not drift away from the recursion
        if it % 50 == 0 {
            op.apply(x, &mut r);
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        }
        rel = norm2(&r) / bnorm;
        history.push(rel);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Ok(SolveStats {
        iterations: it,
        rel_residual: rel,
    })
}

/// Restarted GMRES with right Jacobi preconditioning. `x` holds the initial
/// guess on entry. The relative residual is measured against `‖b‖`.
pub fn gmres(
    op: &dyn LinearOperator,
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    restart: usize,
    opts: SolverOptions,
) -> Result<SolveStats, KrylovError> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let minv = diag.map(jacobi_inverse);
    let precondition = |v: &[f64]| -> Vec<f64> {
        match &minv {
            Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => v.to_vec(),
        }
    };
    let m = restart.max(1);
    let mut history = Vec::new();
    let mut total = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    loop {
        op.apply(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm2(&r);
        let rel = beta / bnorm;
        history.push(rel);
        if rel <= opts.rel_tol {
            return Ok(SolveStats {
                iterations: total,
                rel_residual: rel,
            });
        }
        if total >= opts.max_iter {
            return Err(KrylovError::NotConverged {
                method: "GMRES",
                iterations: total,
                rel_residual: rel,
                history: tail(&history),
            });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns after Givens rotations
        let mut hcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < opts.max_iter {
            let z = precondition(&basis[k]);
            op.apply(&z, &mut w);
            let mut h = vec![0.0; k + 2];
            // modified Gram-Schmidt, repeated once for orthogonality
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(&w, v);
                    h[i] += hij;
                    axpy(-hij, v, &mut w);
                }
            }
            let wn = norm2(&w);
            h[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = h[k].hypot(h[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
            cs.push(c);
            sn.push(s);
            h[k] = denom;
            h[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            hcols.push(h);
            total += 1;
            k += 1;
            let rel = g[k].abs() / bnorm;
            history.push(rel);
            if rel <= opts.rel_tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hcols[j][i] * y[j];
            }
            y[i] = acc / hcols[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut update);
        }
        let update = precondition(&update);
        axpy(1.0, &update, x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplacian_1d(50);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&xs);
        let mut x = vec![0.0; 50];
        let stats = conjugate_gradient(&a, Some(&a.diagonal()), &b, &mut x, SolverOptions::new(1e-13, 500)).unwrap();
        assert!(stats.rel_residual <= 1e-13);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 60;
        let lap = laplacian_1d(n);
        let mut t: Vec<_> = lap.triplets().collect();
        for i in 0..n - 1 {
            t.push((i, i + 1, 0.7));
            t.push((i + 1, i, -0.7));
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let xs: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let b = a.mul_vec(&xs);
        let mut x = vec![0.0; n];
        let stats = gmres(&a, Some(&a.diagonal()), &b, &mut x, 20, SolverOptions::new(1e-12, 2000)).unwrap();
        assert!(stats.rel_residual <= 1e-12);
        let r = crate::sparse::sub(&a.mul_vec(&x), &b);
        assert!(norm2(&r) / norm2(&b) < 1e-11);
    }

    #[test]
    fn gmres_reports_history_on_failure() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let err = gmres(&a, None, &b, &mut x, 5, SolverOptions::new(1e-14, 10)).unwrap_err();
        match err {
            KrylovError::NotConverged { history, .. } => assert!(!history.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
