mod common;

use common::{dense, random_cell_tensor, rank, torus_spec, ANISO};
use faer::Mat;
use mimax_core::dense::spd_solve;
use mimax_core::grid::{BoxSide, GridSpec, PartitionRule};
use mimax_core::materials::{CellTensor, Feedback, Materials};
use mimax_core::model::Model;
use mimax_core::sparse::{dot, norm2, sub, CsrMatrix};
use mimax_core::statics::{
    compute_cohomology, magnetic_flux, magnetic_with_trace, project_dynamic, solve_equilibrium, space_for, split_initial,
    CarrierSpace, Which,
};
use mimax_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn damped(n: usize) -> Model {
    let m = Materials {
        epsilon: CellTensor::Uniform(ANISO),
        mu: random_cell_tensor(n * n * n, 17),
        feedback: Feedback::scalar(1.0),
    };
    Model::new(&GridSpec::unit_cube(n), &PartitionRule::gamma1_sides(&[BoxSide::XMAX]), m).unwrap()
}

fn torus() -> Model {
    Model::new(&torus_spec(), &PartitionRule::undamped(), Materials::vacuum(1.0)).unwrap()
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `W⁻¹ Rᵀ y`: the adjoint range of the curl-freeness rows, which is
/// orthogonal to gradients and harmonic fields.
fn curl_part(space: &CarrierSpace, y: &[f64]) -> Vec<f64> {
    let rhs = space.curl.transpose_mul_vec(y);
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = spd_solve(dense(&space.weight).as_ref(), b.as_ref()).unwrap();
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

fn spaces(model: &Model) -> [CarrierSpace; 2] {
    [space_for(model, Which::E), space_for(model, Which::H)]
}

#[test]
fn pure_gradient_and_pure_curl_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for model in [damped(3), torus()] {
        for space in spaces(&model) {
            let harm = space.harmonic_basis(1e-8).unwrap();
            let g = space.grad.mul_vec(&random(space.grad.ncols(), &mut rng));
            let c = curl_part(&space, &random(space.curl.nrows(), &mut rng));
            for (input, which) in [(g, 0), (c, 2)] {
                let parts = space.decompose(&space.extend(&input), &harm).unwrap();
                let got = [&parts.grad, &parts.harmonic, &parts.curl].map(|p| space.restrict(p).unwrap());
                let scale = space.inner(&input, &input).sqrt();
                for (k, p) in got.iter().enumerate() {
                    let expect = if k == which { input.clone() } else { vec![0.0; input.len()] };
                    let d = sub(p, &expect);
                    assert!(space.inner(&d, &d).sqrt() < 1e-10 * scale, "{:?} part {k}", space.kind);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn deformed_weight_decomposition(seed in any::<u64>()) {
        let model = torus();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = CsrMatrix::from_diagonal(&(0..model.dofmap.n_edges()).map(|_| rng.gen_range(0.1..10.0)).collect::<Vec<_>>());
        let all: Vec<usize> = (0..model.dofmap.boundary_faces().len()).collect();
        let space = CarrierSpace::edges(&model, &q, &all, &all);
        let harm = space.harmonic_basis(1e-8).unwrap();
        prop_assert_eq!(harm.dim(), 0);
        let qf = CsrMatrix::from_diagonal(&(0..model.dofmap.n_faces()).map(|_| rng.gen_range(0.1..10.0)).collect::<Vec<_>>());
        let fspace = CarrierSpace::faces(&model, &qf, &model.complex.gamma0_faces);
        let fharm = fspace.harmonic_basis(1e-8).unwrap();
        prop_assert_eq!(fharm.dim(), 1);
        for (sp, hb) in [(&space, &harm), (&fspace, &fharm)] {
            let r = random(sp.dim(), &mut rng);
            let parts = sp.decompose(&sp.extend(&r), hb).unwrap();
            let p = [&parts.grad, &parts.harmonic, &parts.curl].map(|p| sp.restrict(p).unwrap());
            let n2 = sp.inner(&r, &r);
            let d = sub(&sp.restrict(&parts.sum()).unwrap(), &r);
            prop_assert!(sp.inner(&d, &d).sqrt() < 1e-10 * n2.sqrt());
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                prop_assert!(sp.inner(&p[a], &p[b]).abs() < 1e-10 * n2);
            }
        }
    }
}

#[test]
fn divergence_free_complement_is_curl_range() {
    for model in [damped(3), torus()] {
        for space in spaces(&model) {
            let harm = space.harmonic_basis(1e-8).unwrap();
            let n = space.dim();
            let grad = dense(&space.grad);
            let curl = dense(&space.curl);
            // range ⊆ complement: Rᵀ is annihilated by gradᵀ and the harmonic fields
            let rt = curl.transpose().to_owned();
            let gr = grad.transpose() * &rt;
            let hr = harm.basis.transpose() * &rt;
            let big = |m: &Mat<f64>| (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].abs()).fold(0.0, f64::max);
            assert!(big(&gr) < 1e-9 && big(&hr) < 1e-9, "{:?}", space.kind);
            // complement ⊆ range by dimension count
            assert_eq!(n - rank(&grad, 1e-10) - harm.dim(), rank(&curl, 1e-10), "{:?}", space.kind);
        }
    }
}

#[test]
fn torus_split_absorbs_cohomology() {
    let model = torus();
    let ce = compute_cohomology(&model, Which::E, 1e-8).unwrap();
    let ch = compute_cohomology(&model, Which::H, 1e-8).unwrap();
    assert_eq!((ce.dim(), ch.dim()), (0, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut e0, mut h0) = (vec![0.0; model.dofmap.n_edges()], vec![0.0; model.dofmap.n_faces()]);
    for &i in &model.free.edges {
        e0[i] = rng.gen_range(-1.0..1.0);
    }
    for &i in &model.free.faces {
        h0[i] = rng.gen_range(-1.0..1.0);
    }
    let (e0, mut h0) = project_dynamic(&model, &e0, &h0, &ce, &ch).unwrap();
    let harmonic = ch.field(0);
    for (v, b) in h0.iter_mut().zip(&harmonic) {
        *v += 0.7 * b;
    }
    let rho = vec![0.0; model.interior_nodes.len()];
    let split = split_initial(&model, &e0, &h0, &rho, &ce, &ch).unwrap();

    // projection coefficient from the Gram system of the basis
    let mu = &model.masses.m_mu;
    let gram = dot(&harmonic, &mu.mul_vec(&harmonic));
    let coef = dot(&harmonic, &mu.mul_vec(&h0)) / gram;
    assert!((coef - 0.7).abs() < 1e-10, "{coef}");
    let norm = dot(&h0, &mu.mul_vec(&h0)).sqrt();
    assert!(dot(&harmonic, &mu.mul_vec(&split.h)).abs() < 1e-10 * norm);
    let expect: Vec<f64> = harmonic.iter().map(|b| coef * b).collect();
    assert!(norm2(&sub(&split.equilibrium.h, &expect)) < 1e-10 * norm2(&h0));
    assert!(norm2(&sub(&split.e, &e0)) < 1e-10 * norm2(&e0));
}

#[test]
fn random_charge_equilibrium() {
    let model = damped(4);
    let ce = compute_cohomology(&model, Which::E, 1e-8).unwrap();
    let ch = compute_cohomology(&model, Which::H, 1e-8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rho = random(model.interior_nodes.len(), &mut rng);
    let eq = solve_equilibrium(&model, &rho, None, &ce, &ch).unwrap();
    let div = model.nodal_divergence(&model.masses.m_eps.mul_vec(&eq.e));
    assert!(norm2(&sub(&div, &rho)) < 1e-9 * norm2(&rho));
    assert!(norm2(&model.complex.c.mul_vec(&eq.e)) < 1e-12 * norm2(&eq.e) / model.spacing());
    // tangential trace vanishes on Γ0
    let tt = model.complex.t_tau.mul_vec(&eq.e);
    for &i in &model.complex.gamma0_faces {
        assert!(tt[2 * i].abs() + tt[2 * i + 1].abs() < 1e-12 * norm2(&eq.e));
    }
}

#[test]
fn constant_magnetic_trace_on_gamma1_face() {
    let model = Model::new(&GridSpec::unit_cube(4), &PartitionRule::gamma1_sides(&[BoxSide::XMAX]), Materials::vacuum(1.0)).unwrap();
    let n1 = model.complex.gamma1_faces.len();
    let t: Vec<f64> = (0..n1).flat_map(|_| [0.0, 1.0]).collect();
    let (h, resid) = magnetic_with_trace(&model, &t).unwrap();
    assert!(resid < 1e-10);
    assert!(norm2(&h) > 0.1);

    // weak curl-freeness with the trace data in the boundary term:
    // Cᵀ W h + h² T_τᵀ t = 0 on the free edges
    let w = &model.masses.face_weights;
    let wh: Vec<f64> = h.iter().zip(w).map(|(a, b)| a * b).collect();
    let vol = model.complex.c.transpose_mul_vec(&wh);
    let h2 = model.spacing().powi(2);
    let surf = model.complex.t_tau_gamma1().transpose_mul_vec(&t);
    let r: f64 = model.free.edges.iter().map(|&e| (vol[e] + h2 * surf[e]).powi(2)).sum::<f64>().sqrt();
    assert!(r < 1e-10 * norm2(&surf) * h2, "{r}");
    let b = magnetic_flux(&model, &h);
    assert!(model.complex.d.mul_vec(&b).iter().all(|v| v.abs() < 1e-10));
    for &f in model.dofmap.boundary_faces().iter().enumerate().filter(|(i, _)| model.complex.gamma0_faces.contains(i)).map(|(_, bf)| &bf.face) {
        assert_eq!(h[f], 0.0);
    }

    // the coupled solve also asks -k t to be the trace of a grounded gradient,
    // which a constant tangential field on a face with a grounded rim is not
    let ce = compute_cohomology(&model, Which::E, 1e-8).unwrap();
    let ch = compute_cohomology(&model, Which::H, 1e-8).unwrap();
    let rho = vec![0.0; model.interior_nodes.len()];
    assert!(matches!(solve_equilibrium(&model, &rho, Some(&t), &ce, &ch), Err(Error::Constraint { .. })));
    let zero = vec![0.0; 2 * n1];
    let eq = solve_equilibrium(&model, &rho, Some(&zero), &ce, &ch).unwrap();
    assert!(eq.e.iter().chain(&eq.h).all(|v| *v == 0.0));
}
