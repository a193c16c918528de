#![allow(dead_code)]

use std::collections::VecDeque;

use faer::Mat;
use mimax_core::grid::GridSpec;
use mimax_core::materials::{CellTensor, Tensor3};
use mimax_core::sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Written straight to the stdout handle so the line survives libtest capture.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let line = format!(
        "ACCEPTANCE {id:>2} [{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

/// Random mask of an `n³` box reduced to its largest face-connected component.
pub fn random_mask(n: usize, fill: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = (0..n * n * n).map(|_| rng.gen_bool(fill)).collect();
    let idx = |x: usize, y: usize, z: usize| x + n * (y + n * z);
    let mut comp = vec![usize::MAX; mask.len()];
    let mut best = (0, 0);
    let mut id = 0;
    for s in 0..mask.len() {
        if !mask[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut q = VecDeque::from([s]);
        comp[s] = id;
        while let Some(c) = q.pop_front() {
            size += 1;
            let p = [c % n, (c / n) % n, c / (n * n)];
            for a in 0..3 {
                for d in [-1isize, 1] {
                    let v = p[a] as isize + d;
                    if v < 0 || v >= n as isize {
                        continue;
                    }
                    let mut r = p;
                    r[a] = v as usize;
                    let j = idx(r[0], r[1], r[2]);
                    if mask[j] && comp[j] == usize::MAX {
                        comp[j] = id;
                        q.push_back(j);
                    }
                }
            }
        }
        if size > best.0 {
            best = (size, id);
        }
        id += 1;
    }
    comp.iter().map(|&c| c == best.1).collect()
}

/// `4³` box with a one-cell tunnel along x through its middle (genus one).
pub fn torus_spec() -> GridSpec {
    let n = 4;
    let mask = (0..n * n * n)
        .map(|i| {
            let (y, z) = ((i / n) % n, i / (n * n));
            !(y == 1 && z == 1)
        })
        .collect();
    GridSpec::full_box([n, n, n], 0.25).with_mask(mask)
}

pub fn random_spd(rng: &mut ChaCha8Rng, lo: f64) -> Tensor3 {
    let a: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-0.5..0.5)));
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>();
        }
        t[i][i] += lo;
    }
    t
}

pub fn random_cell_tensor(n_cells: usize, seed: u64) -> CellTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CellTensor::PerCell((0..n_cells).map(|_| random_spd(&mut rng, 0.5)).collect())
}

pub const ANISO: Tensor3 = [[2.0, 0.4, 0.1], [0.4, 1.5, -0.2], [0.1, -0.2, 1.0]];

pub fn dense(m: &CsrMatrix) -> Mat<f64> {
    m.to_dense()
}

/// Numerical rank by singular values relative to the largest one.
pub fn rank(m: &Mat<f64>, rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.singular_values().unwrap();
    let cut = rel * s[0];
    s.iter().filter(|v| **v > cut).count()
}

/// `exp(A)` by scaling and squaring with a degree-20 Taylor polynomial.
pub fn expm(a: &Mat<f64>) -> Mat<f64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let scaled = Mat::from_fn(n, n, |i, j| a[(i, j)] / 2f64.powi(s));
    let mut result = Mat::<f64>::identity(n, n);
    let mut term = Mat::<f64>::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled;
        term = Mat::from_fn(n, n, |i, j| term[(i, j)] / k as f64);
        result = &result + &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Analytic vacuum cavity frequency of mode `(m, n, p)` in a cube of side `l`.
pub fn cavity_frequency(m: u32, n: u32, p: u32, l: f64) -> f64 {
    std::f64::consts::PI * ((m * m + n * n + p * p) as f64).sqrt() / l
}
