mod common;

use common::{dense, random_cell_tensor, random_mask, rank, torus_spec, ANISO};
use mimax_core::grid::{build_grid, classify_boundary, tangents, BoxSide, DofMap, GridSpec, PartitionRule};
use mimax_core::materials::CellTensor;
use mimax_core::operators::{build_complex, check_sbp, MassMatrices, Restriction, WeakCurl};
use mimax_core::sparse::dot;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labelled(spec: &GridSpec, rule: &PartitionRule) -> DofMap {
    classify_boundary(&build_grid(spec).unwrap(), rule).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn complex_is_exact_on_random_masks(n in 2usize..5, seed in any::<u64>()) {
        let spec = GridSpec::full_box([n, n, n], 1.0 / n as f64).with_mask(random_mask(n, 0.7, seed));
        let d = labelled(&spec, &PartitionRule::all_gamma1());
        let cx = build_complex(&d).unwrap();
        prop_assert!(cx.c.matmul(&cx.g).max_abs() == 0.0);
        prop_assert!(cx.d.matmul(&cx.c).max_abs() == 0.0);
    }

    #[test]
    fn sbp_holds_for_random_materials(seed in any::<u64>(), side in 0usize..6) {
        let side = [BoxSide::XMIN, BoxSide::XMAX, BoxSide::YMIN, BoxSide::YMAX, BoxSide::ZMIN, BoxSide::ZMAX][side];
        let d = labelled(&GridSpec::unit_cube(3), &PartitionRule::gamma1_sides(&[side]));
        let cx = build_complex(&d).unwrap();
        let m = MassMatrices::assemble(&d, &random_cell_tensor(d.n_cells(), seed), &CellTensor::Uniform(ANISO));
        let r = check_sbp(&cx, &m, 5, seed).unwrap();
        prop_assert!(r.identity < 1e-12 && r.solved < 1e-10, "{:?}", r);
    }
}

/// Betti numbers from dense ranks: `b0 = V - rank G`,
/// `b1 = E - rank G - rank C`, `b2 = F - rank C - rank D`.
fn betti(d: &DofMap) -> [usize; 3] {
    let cx = build_complex(d).unwrap();
    let (rg, rc, rd) = (rank(&dense(&cx.g), 1e-10), rank(&dense(&cx.c), 1e-10), rank(&dense(&cx.d), 1e-10));
    [d.n_nodes() - rg, d.n_edges() - rg - rc, d.n_faces() - rc - rd]
}

#[test]
fn ranks_follow_topology() {
    let boxd = labelled(&GridSpec::full_box([3, 2, 4], 0.5), &PartitionRule::all_gamma1());
    assert_eq!(betti(&boxd), [1, 0, 0]);
    let torus = labelled(&torus_spec(), &PartitionRule::all_gamma1());
    assert_eq!(betti(&torus), [1, 1, 0]);
    for d in [&boxd, &torus] {
        let chi = d.n_nodes() as i64 - d.n_edges() as i64 + d.n_faces() as i64 - d.n_cells() as i64;
        let b = betti(d);
        assert_eq!(chi, b[0] as i64 - b[1] as i64 + b[2] as i64);
    }
}

#[test]
fn pec_restriction_is_a_subcomplex() {
    let d = labelled(&GridSpec::unit_cube(3), &PartitionRule::undamped());
    let cx = build_complex(&d).unwrap();
    let all: Vec<usize> = (0..d.boundary_faces().len()).collect();
    let r = Restriction::excluding(&d, &all);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut phi = vec![0.0; d.n_nodes()];
    for &n in &r.nodes {
        phi[n] = rng.gen_range(-1.0..1.0);
    }
    let mut e = vec![0.0; d.n_edges()];
    for &i in &r.edges {
        e[i] = rng.gen_range(-1.0..1.0);
    }
    let free_edge = {
        let mut v = vec![false; d.n_edges()];
        r.edges.iter().for_each(|&i| v[i] = true);
        v
    };
    let free_face = {
        let mut v = vec![false; d.n_faces()];
        r.faces.iter().for_each(|&i| v[i] = true);
        v
    };
    for (i, v) in cx.g.mul_vec(&phi).iter().enumerate() {
        assert!(free_edge[i] || *v == 0.0);
    }
    for (i, v) in cx.c.mul_vec(&e).iter().enumerate() {
        assert!(free_face[i] || *v == 0.0);
    }
    assert!(cx.t_tau.mul_vec(&e).iter().all(|v| *v == 0.0));
}

#[test]
fn interior_support_has_no_boundary_term() {
    let d = labelled(&GridSpec::unit_cube(4), &PartitionRule::all_gamma1());
    let cx = build_complex(&d).unwrap();
    let m = MassMatrices::assemble(&d, &CellTensor::Uniform(ANISO), &CellTensor::scalar(1.0));
    let weak = WeakCurl::new(&cx, &m);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let interior_e: Vec<f64> = (0..d.n_edges())
        .map(|i| if d.is_boundary_edge(i) { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect();
    assert!(cx.t_tau.mul_vec(&interior_e).iter().all(|v| *v == 0.0));

    // h vanishing on every face of a boundary cell has no twisted trace, so
    // the weak curl is the exact adjoint of the curl
    let touches_boundary = |c: usize| d.cell(c).iter().any(|&v| v == 0 || v == 3);
    let mut h = vec![0.0; d.n_faces()];
    for c in (0..d.n_cells()).filter(|&c| !touches_boundary(c)) {
        for f in d.cell_faces(c).iter().flatten() {
            h[*f] = rng.gen_range(-1.0..1.0);
        }
    }
    for c in (0..d.n_cells()).filter(|&c| touches_boundary(c)) {
        for f in d.cell_faces(c).iter().flatten() {
            h[*f] = 0.0;
        }
    }
    assert!(h.iter().any(|v| *v != 0.0));
    assert!(cx.t_cross.mul_vec(&h).iter().all(|v| *v == 0.0));
    let e: Vec<f64> = (0..d.n_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lhs = dot(&e, &weak.rhs.mul_vec(&h));
    let ce = cx.c.mul_vec(&e);
    let rhs: f64 = ce.iter().zip(&h).zip(&m.face_weights).map(|((a, b), w)| a * b * w).sum();
    assert!((lhs - rhs).abs() < 1e-14 * rhs.abs().max(1.0), "{lhs} {rhs}");
}

fn efield(x: [f64; 3]) -> [f64; 3] {
    [(x[1] * 2.0).cos(), x[0] * x[2], (x[0] + x[1]).sin()]
}

fn hfield(x: [f64; 3]) -> [f64; 3] {
    [x[2] * x[2], (x[0] * 3.0).sin(), 1.0 + x[0] * x[1]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// `∫_∂Ω E · (ν × H) dS` on the unit cube by a fine midpoint rule.
fn surface_oracle() -> f64 {
    let m = 400;
    let w = 1.0 / (m * m) as f64;
    let mut total = 0.0;
    for axis in 0..3 {
        let (t1, t2) = tangents(axis);
        for (s, v) in [(-1.0, 0.0), (1.0, 1.0)] {
            let mut nu = [0.0; 3];
            nu[axis] = s;
            for i in 0..m {
                for j in 0..m {
                    let mut x = [0.0; 3];
                    x[axis] = v;
                    x[t1] = (i as f64 + 0.5) / m as f64;
                    x[t2] = (j as f64 + 0.5) / m as f64;
                    let e = efield(x);
                    let nh = cross(nu, hfield(x));
                    total += w * (e[0] * nh[0] + e[1] * nh[1] + e[2] * nh[2]);
                }
            }
        }
    }
    total
}

fn discrete_surface(n: usize) -> f64 {
    let d = labelled(&GridSpec::unit_cube(n), &PartitionRule::all_gamma1());
    let cx = build_complex(&d).unwrap();
    let e: Vec<f64> = (0..d.n_edges()).map(|i| efield(d.edge_midpoint(i))[d.edge(i).0]).collect();
    let h: Vec<f64> = (0..d.n_faces()).map(|f| hfield(d.face_center(f))[d.face(f).0]).collect();
    dot(&cx.t_tau.mul_vec(&e), &cx.m_gamma.mul_vec(&cx.t_cross.mul_vec(&h)))
}

#[test]
fn trace_pairing_approximates_surface_integral() {
    let exact = surface_oracle();
    let errs: Vec<f64> = [8, 16].iter().map(|&n| (discrete_surface(n) - exact).abs()).collect();
    assert!(errs[1] < 0.1 * exact.abs().max(1.0), "{errs:?} vs {exact}");
    // first order at least
    assert!(errs[1] < 0.6 * errs[0], "{errs:?}");
}
