//! Experiment drivers behind the CLI verbs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mimax_core::dynamics::{
    assemble_generator, check_dissipativity, decay_envelope, random_dynamic_state, simulate, Generator,
    HarmonicOverlap, Integrator, SimulateOptions, State, StepOptions,
};
use mimax_core::grid::{build_grid, classify_boundary, BoxSide};
use mimax_core::krylov::SolverOptions;
use mimax_core::model::Model;
use mimax_core::operators::{assemble_complex, check_sbp};
use mimax_core::sparse::{axpy, dot, CsrMatrix};
use mimax_core::spectral::{
    band_minima, dense_spectrum, resolvent_sweep, restricted_matrix, shift_invert_spectrum, side_faces,
    unique_continuation_test, xh_basis, Method, ShiftInvertOptions, SpectrumReport,
};
use mimax_core::statics::{compute_cohomology, split_initial, CarrierSpace, CohomologyBasis, Which};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::RunError;
use crate::report::{
    num, sha256_hex, Artifacts, Failure, Manifest, DECAY_TABLE_HEADER, ENVELOPE_HEADER, TRAJECTORY_HEADER,
    RESOLVENT_HEADER, TRIPLET_HEADER, VERIFY_HEADER,
};
use crate::scenario::{load_scenario, ExperimentKind, InitialState, IntegratorName, Scenario, SpectrumMethod};
use crate::snapshot::{read_field, Snapshot, Species};

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub error: Option<RunError>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, RunError::exit_code)
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    base: PathBuf,
    seed: u64,
    model: Model,
    out: Artifacts,
}

/// Loads the scenario, runs one experiment and writes its artifacts and
/// manifest. Errors are reported in the outcome rather than returned, so
/// that the manifest is always written once the output directory is known.
pub fn run_experiment(verb: ExperimentKind, scenario_path: &Path, opts: &RunOptions) -> RunOutcome {
    let start = Instant::now();
    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads);
    let scenario_bytes = std::fs::read(scenario_path).unwrap_or_default();
    let mut manifest = Manifest {
        tool: "mimax",
        version: env!("CARGO_PKG_VERSION"),
        verb: verb.name().to_string(),
        scenario: scenario_path.display().to_string(),
        scenario_sha256: sha256_hex(&scenario_bytes),
        seed: opts.seed.unwrap_or(0),
        threads,
        wall_time_s: 0.0,
        status: "ok",
        partial: false,
        failure: None,
        artifacts: Vec::new(),
    };
    let scenario = match load_scenario(scenario_path) {
        Ok(s) => s,
        Err(e) => {
            let dir = opts.output.clone().unwrap_or_else(|| PathBuf::from("out"));
            return finish(manifest, dir, Vec::new(), Some(e.into()), start);
        }
    };
    manifest.seed = opts.seed.unwrap_or(scenario.experiment.seed);
    let base = scenario_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = opts
        .output
        .clone()
        .or_else(|| scenario.output.dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut written = Vec::new();
    let result = (|| -> Result<(), RunError> {
        if let Some(k) = scenario.experiment.kind {
            if k != verb {
                return Err(RunError::VerbMismatch {
                    verb: verb.name(),
                    scenario: k.name(),
                });
            }
        }
        let spec = scenario.grid_spec(&base)?;
        let dofmap = classify_boundary(&build_grid(&spec).map_err(mimax_core::Error::from)?, &scenario.partition())
            .map_err(mimax_core::Error::from)?;
        let materials = scenario.materials(&base, &dofmap)?;
        let model = Model::from_dofmap(dofmap, materials)?;
        let mut ctx = Context {
            scenario: &scenario,
            base: base.clone(),
            seed: manifest.seed,
            model,
            out: Artifacts::new(&dir)?,
        };
        let r = dispatch(verb, &mut ctx);
        written = std::mem::take(&mut ctx.out.written);
        r
    })();
    finish(manifest, dir, written, result.err(), start)
}

fn finish(
    mut manifest: Manifest,
    dir: PathBuf,
    artifacts: Vec<crate::report::Artifact>,
    error: Option<RunError>,
    start: Instant,
) -> RunOutcome {
    manifest.partial = error.is_some() && !artifacts.is_empty();
    manifest.artifacts = artifacts;
    if let Some(e) = &error {
        manifest.status = "failed";
        manifest.failure = Some(Failure {
            kind: e.kind(),
            message: e.to_string(),
        });
        let failure = json!({ "verb": manifest.verb, "kind": e.kind(), "message": e.to_string() });
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("failure.json"), format!("{failure:#}\n"));
        }
    }
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let error = match manifest.write(&dir) {
        Ok(()) => error,
        Err(w) => error.or(Some(w)),
    };
    RunOutcome { dir, manifest, error }
}

fn dispatch(verb: ExperimentKind, ctx: &mut Context) -> Result<(), RunError> {
    if ctx.scenario.output.export_matrices {
        export_matrices(ctx)?;
    }
    match verb {
        ExperimentKind::Verify => verify(ctx),
        ExperimentKind::Spectrum => spectrum(ctx),
        ExperimentKind::Resolvent => resolvent(ctx),
        ExperimentKind::Simulate => simulate_run(ctx),
        ExperimentKind::DecayStudy => decay_study(ctx),
        ExperimentKind::Decompose => decompose(ctx),
        ExperimentKind::Cohomology => cohomology(ctx),
        ExperimentKind::Ucp => ucp(ctx),
    }
}

fn export_matrices(ctx: &mut Context) -> Result<(), RunError> {
    let m = &ctx.model;
    let list: [(&str, &CsrMatrix); 8] = [
        ("G", &m.complex.g),
        ("C", &m.complex.c),
        ("D", &m.complex.d),
        ("T_tau", &m.complex.t_tau),
        ("T_cross", &m.complex.t_cross),
        ("M_gamma", &m.complex.m_gamma),
        ("M_eps", &m.masses.m_eps),
        ("M_mu", &m.masses.m_mu),
    ];
    for (name, a) in list {
        let rows = a.triplets().map(|(i, j, v)| vec![i.to_string(), j.to_string(), num(v)]);
        ctx.out.csv(&format!("matrices/{name}.csv"), &TRIPLET_HEADER, rows, "triplets/1")?;
    }
    Ok(())
}

fn cohomologies(ctx: &Context) -> Result<(CohomologyBasis, CohomologyBasis), RunError> {
    let tol = ctx.scenario.experiment.tol;
    Ok((
        compute_cohomology(&ctx.model, Which::E, tol)?,
        compute_cohomology(&ctx.model, Which::H, tol)?,
    ))
}

fn step_options(s: &Scenario) -> StepOptions {
    StepOptions {
        integrator: match s.experiment.integrator {
            IntegratorName::Midpoint => Integrator::ImplicitMidpoint,
            IntegratorName::Leapfrog => Integrator::Leapfrog,
        },
        krylov: SolverOptions::new(s.experiment.solver_tol, 500),
        ..StepOptions::default()
    }
}

#[derive(Serialize)]
struct CheckRow {
    check: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn verify(ctx: &mut Context) -> Result<(), RunError> {
    let m = &ctx.model;
    let x = &ctx.scenario.experiment;
    let mut rows = Vec::new();
    let mut check = |name: &str, value: f64, tolerance: f64, pass: bool| {
        rows.push(CheckRow {
            check: name.to_string(),
            value,
            tolerance,
            pass,
        })
    };

    let (g, c, d) = assemble_complex(&m.dofmap);
    let cg = c.matmul(&g);
    let dc = d.matmul(&c);
    check("exactness.CG_nnz", cg.nnz() as f64, 0.0, cg.nnz() == 0);
    check("exactness.DC_nnz", dc.nnz() as f64, 0.0, dc.nnz() == 0);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst = 0.0f64;
    for _ in 0..x.probes {
        let phi: Vec<f64> = (0..g.ncols()).map(|_| rng.gen_range(-8i32..8) as f64).collect();
        let e: Vec<f64> = (0..c.ncols()).map(|_| rng.gen_range(-8i32..8) as f64).collect();
        worst = worst
            .max(mimax_core::sparse::max_abs(&c.mul_vec(&g.mul_vec(&phi))))
            .max(mimax_core::sparse::max_abs(&d.mul_vec(&c.mul_vec(&e))));
    }
    check("exactness.integer_probes", worst, 0.0, worst == 0.0);

    let sbp = check_sbp(&m.complex, &m.masses, x.probes, ctx.seed).map_err(mimax_core::Error::from)?;
    check("sbp.identity", sbp.identity, 1e-13, sbp.identity < 1e-13);

    let gen = assemble_generator(m);
    let diss = check_dissipativity(&gen, x.probes, ctx.seed)?;
    check("dissipativity.identity", diss.identity, 1e-12, diss.identity < 1e-12);
    check("dissipativity.max_rate", diss.max_rate, 0.0, diss.max_rate <= 0.0);
    if let Some(s) = diss.skew {
        check("dissipativity.skew", s, 1e-12, s < 1e-12);
    }

    let spaces = [
        ("helmholtz.edge_eps", CarrierSpace::edges(m, &m.masses.m_eps, &m.complex.gamma0_faces, &m.complex.gamma0_faces)),
        ("helmholtz.face_mu", CarrierSpace::faces(m, &m.masses.m_mu, &m.complex.gamma0_faces)),
    ];
    let fields = (x.probes / 10).max(5);
    for (name, space) in &spaces {
        let harm = space.harmonic_basis(x.tol)?;
        let (mut recon, mut ortho) = (0.0f64, 0.0f64);
        for _ in 0..fields {
            let r: Vec<f64> = (0..space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = space.extend(&r);
            let parts = space.decompose(&f, &harm)?;
            let n2 = space.inner(&r, &r);
            let diff: Vec<f64> = parts.sum().iter().zip(&f).map(|(a, b)| a - b).collect();
            let dr = space.restrict(&diff)?;
            recon = recon.max((space.inner(&dr, &dr) / n2).sqrt());
            let g = space.restrict(&parts.grad)?;
            let h = space.restrict(&parts.harmonic)?;
            let c = space.restrict(&parts.curl)?;
            for (a, b) in [(&g, &h), (&g, &c), (&h, &c)] {
                ortho = ortho.max(space.inner(a, b).abs() / n2);
            }
        }
        check(&format!("{name}.reconstruction"), recon, 1e-10, recon < 1e-10);
        check(&format!("{name}.orthogonality"), ortho, 1e-10, ortho < 1e-10);
    }

    let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| r.check.clone()).collect();
    let csv_rows = rows
        .iter()
        .map(|r| vec![r.check.clone(), num(r.value), num(r.tolerance), r.pass.to_string()]);
    ctx.out.csv("verify.csv", &VERIFY_HEADER, csv_rows, "verify/1")?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::ChecksFailed(failed))
    }
}

fn method_name(m: &Method) -> &'static str {
    match m {
        Method::Dense => "dense",
        Method::ShiftInvert { .. } => "shift-invert",
    }
}

fn opt(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |v| json!(v))
}

fn compute_spectrum(ctx: &Context, gen: &Generator) -> Result<(SpectrumReport, usize), RunError> {
    let x = &ctx.scenario.experiment;
    let dense = match x.method {
        SpectrumMethod::Dense => true,
        SpectrumMethod::ShiftInvert => false,
        SpectrumMethod::Auto => gen.dim() <= mimax_core::spectral::DENSE_LIMIT,
    };
    if dense {
        let (ce, ch) = cohomologies(ctx)?;
        let basis = xh_basis(gen, &ce, &ch, x.tol)?;
        let a = restricted_matrix(gen, &basis);
        let (s, _) = dense_spectrum(&a)?;
        Ok((s, a.nrows()))
    } else {
        let omegas = ctx.scenario.omegas();
        if omegas.is_empty() {
            return Err(RunError::Missing {
                verb: "spectrum",
                field: "omegas",
            });
        }
        let opts = ShiftInvertOptions {
            krylov_dim: x.krylov_dim,
            seed: ctx.seed,
            ..ShiftInvertOptions::new(omegas, x.nev)
        };
        Ok((shift_invert_spectrum(gen, &opts)?, gen.dim()))
    }
}

fn spectrum(ctx: &mut Context) -> Result<(), RunError> {
    let gen = assemble_generator(&ctx.model);
    let (s, dim) = compute_spectrum(ctx, &gen)?;
    let table = s.decay_table();
    let bands: Vec<_> = band_minima(&table, ctx.scenario.experiment.bands)
        .into_iter()
        .map(|(lo, hi, min)| json!({ "abs_im_min": lo, "abs_im_max": hi, "min_neg_re": min }))
        .collect();
    let eigen: Vec<_> = s
        .eigenvalues
        .iter()
        .zip(&s.residuals)
        .map(|(l, r)| json!({ "re": l.re, "im": l.im, "residual": r }))
        .collect();
    let finite = |v: f64| if v.is_finite() { json!(v) } else { serde_json::Value::Null };
    let report = json!({
        "schema": "spectrum/1",
        "method": method_name(&s.method),
        "dimension": dim,
        "count": s.eigenvalues.len(),
        "abscissa": finite(s.abscissa()),
        "min_abs": finite(s.min_abs()),
        "max_abs_re": finite(s.max_abs_re()),
        "max_residual": finite(s.max_residual()),
        "conjugation_defect": finite(s.conjugation_defect()),
        "lowest_frequency": opt(s.lowest_frequency()),
        "eigenvalues": eigen,
        "bands": bands,
        "notes": s.notes,
    });
    ctx.out.json("spectrum.json", &report, "spectrum/1")?;
    let rows = table.iter().map(|(a, b)| vec![num(*a), num(*b)]);
    ctx.out.csv("decay_table.csv", &DECAY_TABLE_HEADER, rows, "decay-table/1")
}

fn resolvent(ctx: &mut Context) -> Result<(), RunError> {
    let omegas = ctx.scenario.omegas();
    if omegas.is_empty() {
        return Err(RunError::Missing {
            verb: "resolvent",
            field: "omegas",
        });
    }
    let gen = assemble_generator(&ctx.model);
    let (ce, ch) = cohomologies(ctx)?;
    let basis = xh_basis(&gen, &ce, &ch, ctx.scenario.experiment.tol)?;
    let a = restricted_matrix(&gen, &basis);
    let sweep = resolvent_sweep(&a, &omegas);
    let norms = sweep.resolvent_norms();
    let points: Vec<_> = (0..omegas.len())
        .map(|i| json!({ "omega": omegas[i], "sigma_min": sweep.sigma_min[i], "resolvent_norm": norms[i] }))
        .collect();
    let report = json!({
        "schema": "resolvent/1",
        "dimension": a.nrows(),
        "failures": sweep.sigma_min.iter().filter(|s| s.is_none()).count(),
        "points": points,
    });
    ctx.out.json("resolvent.json", &report, "resolvent/1")?;
    let cell = |v: Option<f64>| v.map_or_else(String::new, num);
    let rows = (0..omegas.len()).map(|i| vec![num(omegas[i]), cell(sweep.sigma_min[i]), cell(norms[i])]);
    ctx.out.csv("resolvent.csv", &RESOLVENT_HEADER, rows, "resolvent-csv/1")
}

/// Full-length fields from snapshot files, or `None` for the other modes.
fn snapshot_fields(ctx: &Context) -> Result<Option<(Vec<f64>, Vec<f64>)>, RunError> {
    let x = &ctx.scenario.experiment;
    if x.x0 != InitialState::Snapshot {
        return Ok(None);
    }
    let dm = &ctx.model.dofmap;
    let e = read_field(&ctx.base.join(x.x0_e.as_ref().unwrap()), dm, Species::Edge)?;
    let h = read_field(&ctx.base.join(x.x0_h.as_ref().unwrap()), dm, Species::Face)?;
    Ok(Some((e, h)))
}

fn simulate_run(ctx: &mut Context) -> Result<(), RunError> {
    let x = &ctx.scenario.experiment;
    let dt = x.dt.unwrap_or(ctx.model.spacing() / 2.0);
    let t_final = x.t_final.ok_or(RunError::Missing {
        verb: "simulate",
        field: "t_final",
    })?;
    let m = &ctx.model;
    let gen = assemble_generator(m);
    let (ce, ch) = cohomologies(ctx)?;
    let (x0, eq) = match x.x0 {
        InitialState::Zero => (gen.zero_state(), None),
        InitialState::Random => (random_dynamic_state(m, &gen, &ce, &ch, x.max_wavenumber, ctx.seed)?, None),
        InitialState::Snapshot => {
            let (e, h) = snapshot_fields(ctx)?.unwrap();
            let rho = m.nodal_divergence(&m.masses.m_eps.mul_vec(&e));
            let split = split_initial(m, &e, &h, &rho, &ce, &ch)?;
            (gen.restrict(&split.e, &split.h), Some(split.equilibrium))
        }
    };
    let opts = SimulateOptions {
        sample_every: x.sample_every,
        step: step_options(ctx.scenario),
        ..SimulateOptions::new(t_final, dt)
    };
    let rec = simulate(&gen, &x0, &opts, &HarmonicOverlap::new(&gen, &ce, &ch))?;
    let rows = (0..rec.times.len()).map(|i| {
        [
            rec.times[i],
            rec.energy[i],
            rec.dissipation_rate[i],
            rec.norm_h[i],
            rec.div_residual_d[i],
            rec.div_residual_b[i],
            rec.dist_cohomology[i],
        ]
        .map(num)
    });
    ctx.out.csv("trajectory.csv", &TRAJECTORY_HEADER, rows, "trajectory/1")?;
    let (mut e, mut h) = gen.extend(&rec.final_state);
    if let Some(eq) = &eq {
        axpy(1.0, &eq.e, &mut e);
        axpy(1.0, &eq.h, &mut h);
    }
    let dm = &m.dofmap;
    ctx.out.snapshot("e_final.mxw", &Snapshot::new(dm, Species::Edge, e))?;
    ctx.out.snapshot("h_final.mxw", &Snapshot::new(dm, Species::Face, h))?;
    let summary = json!({
        "schema": "simulate/1",
        "dt": dt,
        "t_final": t_final,
        "steps": rec.step_dissipated.len(),
        "initial_energy": rec.step_energy[0],
        "final_energy": rec.step_energy.last(),
        "max_energy_increase": finite_or_null(rec.max_energy_increase()),
        "ledger_defect": rec.ledger_defect(),
        "graph_norm": rec.graph_norm,
        "equilibrium_energy_norms": eq.as_ref().map(|q| json!({
            "e": dot(&q.e, &m.masses.m_eps.mul_vec(&q.e)).sqrt(),
            "h": dot(&q.h, &m.masses.m_mu.mul_vec(&q.h)).sqrt(),
        })),
    });
    ctx.out.json("simulate.json", &summary, "simulate/1")
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn decay_study(ctx: &mut Context) -> Result<(), RunError> {
    use rayon::prelude::*;
    let x = &ctx.scenario.experiment;
    let m = &ctx.model;
    let dt = x.dt.unwrap_or(m.spacing() / 2.0);
    let t_final = x.t_final.unwrap_or(50.0);
    let gen = assemble_generator(m);
    let (ce, ch) = cohomologies(ctx)?;
    let seeds: Vec<u64> = (0..x.states as u64).map(|i| ctx.seed.wrapping_mul(1000).wrapping_add(i)).collect();
    let states = seeds
        .iter()
        .map(|&s| random_dynamic_state(m, &gen, &ce, &ch, x.max_wavenumber, s))
        .collect::<Result<Vec<State>, _>>()?;
    let opts = SimulateOptions {
        sample_every: x.sample_every,
        step: step_options(ctx.scenario),
        ..SimulateOptions::new(t_final, dt)
    };
    let overlap = HarmonicOverlap::new(&gen, &ce, &ch);
    let records = states
        .par_iter()
        .map(|x0| simulate(&gen, x0, &opts, &overlap))
        .collect::<Result<Vec<_>, _>>()?;
    let env = decay_envelope(&records)?;
    let rows = (0..env.times.len()).map(|i| {
        let hi = env.curves.iter().map(|c| c[i]).fold(0.0, f64::max);
        let lo = env.curves.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
        [env.times[i], env.envelope[i], hi, lo].map(num)
    });
    ctx.out.csv("envelope.csv", &ENVELOPE_HEADER, rows, "envelope/1")?;
    let ratio = env.envelope.last().copied().unwrap_or(0.0) / env.envelope[0].max(f64::MIN_POSITIVE);
    let summary = json!({
        "schema": "decay-study/1",
        "states": x.states,
        "seeds": seeds,
        "dt": dt,
        "t_final": t_final,
        "envelope_ratio": ratio,
        "non_decaying": env.non_decaying,
        "resampled": env.resampled,
        "max_energy_increase": finite_or_null(records.iter().map(|r| r.max_energy_increase()).fold(f64::NEG_INFINITY, f64::max)),
        "max_ledger_defect": records.iter().map(|r| r.ledger_defect()).fold(0.0, f64::max),
        "max_divergence_residual": records
            .iter()
            .flat_map(|r| r.div_residual_d.iter().chain(&r.div_residual_b))
            .copied()
            .fold(0.0, f64::max),
    });
    ctx.out.json("decay_study.json", &summary, "decay-study/1")
}

/// Random admissible fields: a dynamic state plus a random interior-node
/// gradient and random harmonic components.
fn random_fields(
    ctx: &Context,
    gen: &Generator,
    ce: &CohomologyBasis,
    ch: &CohomologyBasis,
) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let m = &ctx.model;
    let x = &ctx.scenario.experiment;
    let dynamic = random_dynamic_state(m, gen, ce, ch, x.max_wavenumber, ctx.seed)?;
    let (mut e, mut h) = gen.extend(&dynamic);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5eed);
    let phi: Vec<f64> = (0..m.interior_nodes.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    axpy(1.0, &m.grad_interior().mul_vec(&phi), &mut e);
    for j in 0..ce.dim() {
        axpy(rng.gen_range(-1.0..1.0), &ce.field(j), &mut e);
    }
    for j in 0..ch.dim() {
        axpy(rng.gen_range(-1.0..1.0), &ch.field(j), &mut h);
    }
    Ok((e, h))
}

fn decompose(ctx: &mut Context) -> Result<(), RunError> {
    let m = &ctx.model;
    let gen = assemble_generator(m);
    let (ce, ch) = cohomologies(ctx)?;
    let (e0, h0) = match snapshot_fields(ctx)? {
        Some(f) => f,
        None if ctx.scenario.experiment.x0 == InitialState::Zero => (vec![0.0; m.dofmap.n_edges()], vec![0.0; m.dofmap.n_faces()]),
        None => random_fields(ctx, &gen, &ce, &ch)?,
    };
    let rho = m.nodal_divergence(&m.masses.m_eps.mul_vec(&e0));
    let split = split_initial(m, &e0, &h0, &rho, &ce, &ch)?;
    let eq = &split.equilibrium;
    let ne = |v: &[f64]| dot(v, &m.masses.m_eps.mul_vec(v)).sqrt();
    let nh = |v: &[f64]| dot(v, &m.masses.m_mu.mul_vec(v)).sqrt();
    let cross_e = dot(&eq.e, &m.masses.m_eps.mul_vec(&split.e)) / (ne(&eq.e) * ne(&split.e)).max(f64::MIN_POSITIVE);
    let cross_h = dot(&eq.h, &m.masses.m_mu.mul_vec(&split.h)) / (nh(&eq.h) * nh(&split.h)).max(f64::MIN_POSITIVE);
    let report = json!({
        "schema": "decompose/1",
        "source": match ctx.scenario.experiment.x0 {
            InitialState::Snapshot => "snapshot",
            InitialState::Zero => "zero",
            InitialState::Random => "random",
        },
        "harmonic_dims": [ce.dim(), ch.dim()],
        "charge_norm": dot(&rho, &rho).sqrt(),
        "norms": {
            "e0": ne(&e0), "h0": nh(&h0),
            "e_equilibrium": ne(&eq.e), "h_equilibrium": nh(&eq.h),
            "e_dynamic": ne(&split.e), "h_dynamic": nh(&split.h),
        },
        "cosines": { "e": cross_e, "h": cross_h },
        "residuals": {
            "gauss_e": eq.residuals.gauss_e,
            "curl_e": eq.residuals.curl_e,
            "div_b": eq.residuals.div_b,
            "trace": [eq.residuals.trace.0, eq.residuals.trace.1],
        },
    });
    let dm = &m.dofmap;
    let snaps = [
        ("e0.mxw", Species::Edge, e0.clone()),
        ("h0.mxw", Species::Face, h0.clone()),
        ("e_eq.mxw", Species::Edge, eq.e.clone()),
        ("h_eq.mxw", Species::Face, eq.h.clone()),
        ("e_dyn.mxw", Species::Edge, split.e.clone()),
        ("h_dyn.mxw", Species::Face, split.h.clone()),
    ];
    for (name, species, v) in snaps {
        ctx.out.snapshot(name, &Snapshot::new(dm, species, v))?;
    }
    ctx.out.json("decompose.json", &report, "decompose/1")
}

fn cohomology(ctx: &mut Context) -> Result<(), RunError> {
    let (ce, ch) = cohomologies(ctx)?;
    let describe = |b: &CohomologyBasis| {
        json!({
            "dim": b.dim(),
            "threshold": b.threshold,
            "gap_ratio": finite_or_null(b.gap_ratio),
            "tail": b.tail,
            "warning": b.warning,
        })
    };
    let report = json!({ "schema": "cohomology/1", "e": describe(&ce), "h": describe(&ch) });
    let dm = &ctx.model.dofmap;
    for j in 0..ce.dim() {
        ctx.out.snapshot(&format!("cohomology_e_{j}.mxw"), &Snapshot::new(dm, Species::Edge, ce.field(j)))?;
    }
    for j in 0..ch.dim() {
        ctx.out.snapshot(&format!("cohomology_h_{j}.mxw"), &Snapshot::new(dm, Species::Face, ch.field(j)))?;
    }
    ctx.out.json("cohomology.json", &report, "cohomology/1")
}

fn ucp(ctx: &mut Context) -> Result<(), RunError> {
    let gen = assemble_generator(&ctx.model);
    let omega = match ctx.scenario.experiment.omega {
        Some(w) => w,
        None => compute_spectrum(ctx, &gen)?
            .0
            .lowest_frequency()
            .ok_or_else(|| RunError::Invalid("no nonzero eigenvalue to test at".into()))?,
    };
    let mut patch: Vec<usize> = Vec::new();
    for s in &ctx.scenario.experiment.patch {
        patch.extend(side_faces(&ctx.model, BoxSide::parse(s).unwrap()));
    }
    patch.sort_unstable();
    patch.dedup();
    let r = unique_continuation_test(&ctx.model, &gen, omega, &patch)?;
    let report = json!({
        "schema": "ucp/1",
        "omega": r.omega,
        "sigma_min": r.sigma_min,
        "patch": ctx.scenario.experiment.patch,
        "patch_faces": r.patch_faces,
        "rows": r.rows,
        "cols": r.cols,
    });
    ctx.out.json("ucp.json", &report, "ucp/1")
}
