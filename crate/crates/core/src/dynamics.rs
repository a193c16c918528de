//! The dissipative generator with impedance feedback on Γ1, time integration
//! and decay bookkeeping.
//!
//! On the free DOFs (Γ0 constraints eliminated) the semi-discrete system is
//!
//! ```text
//! M_ε ė =  Cᵀ W h − R e        R = T_τᵀ (h² k⁻¹) T_τ   on Γ1
//! M_μ ḣ = −W C e
//! ```
//!
//! which is the weak curl with the Γ1 trace `π×H` replaced by `−k⁻¹ πτE`.
//! With `P = diag(M_ε, M_μ)` and `S = [[−R, CᵀW], [−WC, 0]]` the generator is
//! `A = P⁻¹ S`, and `⟨A x, x⟩_H = xᵀ S x = −eᵀ R e ≤ 0`. Time stepping works
//! in the fluxes `d = M_ε e`, `b = W⁻¹ M_μ h`, whose discrete divergences
//! are then preserved to rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::krylov::{conjugate_gradient, gmres, SolveStats, SolverOptions};
use crate::model::Model;
use crate::sparse::{axpy, dot, norm2, sub, CsrMatrix};
use crate::statics::{project_dynamic, CohomologyBasis};

pub const MASS: SolverOptions = SolverOptions::new(1e-14, 5000);

/// Electric and magnetic field on the free DOFs.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub e: Vec<f64>,
    pub h: Vec<f64>,
}

/// Electric and magnetic flux on the free DOFs.
#[derive(Clone, Debug, PartialEq)]
pub struct Fluxes {
    pub d: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Generator {
    /// Free edges and faces (global indices).
    pub edges: Vec<usize>,
    pub faces: Vec<usize>,
    n_edges_full: usize,
    n_faces_full: usize,
    pub m_eps: CsrMatrix,
    pub m_mu: CsrMatrix,
    /// Face weights `W` on the free faces.
    pub w: Vec<f64>,
    /// Curl from free edges to free faces.
    pub c: CsrMatrix,
    /// `Cᵀ W`.
    pub ctw: CsrMatrix,
    /// Γ1 tangential trace on the free edges.
    pub t_tau: CsrMatrix,
    /// `h² k` and `h² k⁻¹` on the Γ1 trace space.
    pub m_gamma_k: CsrMatrix,
    pub m_gamma_kinv: CsrMatrix,
    /// Boundary damping `R`.
    pub r: CsrMatrix,
    /// Gradient from interior nodes to free edges.
    pub g_int: CsrMatrix,
    /// Divergence from free faces to cells.
    pub div: CsrMatrix,
    pub spacing: f64,
}

pub fn assemble_generator(model: &Model) -> Generator {
    let edges = model.free.edges.clone();
    let faces = model.free.faces.clone();
    let cx = &model.complex;
    let w: Vec<f64> = faces.iter().map(|&f| model.masses.face_weights[f]).collect();
    let c = cx.c.submatrix(&faces, &edges);
    let ctw = c.transpose().scale_cols(&w);
    let t_tau = cx.t_tau_gamma1().submatrix(
        &(0..cx.gamma1_rows.len()).collect::<Vec<_>>(),
        &edges,
    );
    let n_g1 = cx.gamma1_faces.len();
    let m_gamma_k = crate::materials::feedback_mass(&model.dofmap, &model.materials.feedback, n_g1, false);
    let m_gamma_kinv = crate::materials::feedback_mass(&model.dofmap, &model.materials.feedback, n_g1, true);
    let r = t_tau.transpose().matmul(&m_gamma_kinv).matmul(&t_tau);
    let g_int = cx.g.submatrix(&edges, &model.interior_nodes);
    let cells: Vec<usize> = (0..model.dofmap.n_cells()).collect();
    let div = cx.d.submatrix(&cells, &faces);
    Generator {
        m_eps: model.masses.m_eps.submatrix(&edges, &edges),
        m_mu: model.masses.m_mu.submatrix(&faces, &faces),
        n_edges_full: model.dofmap.n_edges(),
        n_faces_full: model.dofmap.n_faces(),
        edges,
        faces,
        w,
        c,
        ctw,
        t_tau,
        m_gamma_k,
        m_gamma_kinv,
        r,
        g_int,
        div,
        spacing: model.spacing(),
    }
}

impl Generator {
    pub fn n_e(&self) -> usize {
        self.edges.len()
    }

    pub fn n_h(&self) -> usize {
        self.faces.len()
    }

    pub fn dim(&self) -> usize {
        self.n_e() + self.n_h()
    }

    pub fn is_damped(&self) -> bool {
        self.t_tau.nrows() > 0
    }

    /// `P = diag(M_ε, M_μ)`.
    pub fn p_matrix(&self) -> CsrMatrix {
        CsrMatrix::block(&[vec![Some(&self.m_eps), None], vec![None, Some(&self.m_mu)]])
    }

    /// `S = [[−R, CᵀW], [−WC, 0]]`.
    pub fn s_matrix(&self) -> CsrMatrix {
        let neg_r = self.r.scaled(-1.0);
        let wc = self.c.scale_rows(&self.w).scaled(-1.0);
        let zero_e = CsrMatrix::zeros(self.n_e(), self.n_e());
        let rr = if self.r.nnz() > 0 { &neg_r } else { &zero_e };
        CsrMatrix::block(&[vec![Some(rr), Some(&self.ctw)], vec![Some(&wc), None]])
    }

    /// `S x`, split into its two blocks.
    pub fn s_apply(&self, x: &State) -> State {
        let mut de = self.ctw.mul_vec(&x.h);
        axpy(-1.0, &self.r.mul_vec(&x.e), &mut de);
        let mut dh = self.c.mul_vec(&x.e);
        dh.iter_mut().zip(&self.w).for_each(|(v, w)| *v *= -w);
        State { e: de, h: dh }
    }

    /// `A x = P⁻¹ S x`.
    pub fn apply(&self, x: &State) -> Result<State> {
        let s = self.s_apply(x);
        Ok(State {
            e: self.solve_eps(&s.e, None)?,
            h: self.solve_mu(&s.h, None)?,
        })
    }

    pub fn solve_eps(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut x = guess.map_or_else(|| vec![0.0; rhs.len()], |g| g.to_vec());
        conjugate_gradient(&self.m_eps, Some(&self.m_eps.diagonal()), rhs, &mut x, MASS)?;
        Ok(x)
    }

    pub fn solve_mu(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut x = guess.map_or_else(|| vec![0.0; rhs.len()], |g| g.to_vec());
        conjugate_gradient(&self.m_mu, Some(&self.m_mu.diagonal()), rhs, &mut x, MASS)?;
        Ok(x)
    }

    pub fn inner(&self, x: &State, y: &State) -> f64 {
        dot(&x.e, &self.m_eps.mul_vec(&y.e)) + dot(&x.h, &self.m_mu.mul_vec(&y.h))
    }

    pub fn norm(&self, x: &State) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn energy(&self, x: &State) -> f64 {
        0.5 * self.inner(x, x)
    }

    /// Rate of energy loss through Γ1, `eᵀ R e`.
    pub fn dissipation_rate(&self, e: &[f64]) -> f64 {
        dot(e, &self.r.mul_vec(e))
    }

    /// The twisted trace `π×H = −k⁻¹ πτE` on Γ1 implied by the feedback law.
    pub fn implied_twisted_trace(&self, e: &[f64]) -> Vec<f64> {
        let h2 = self.spacing * self.spacing;
        self.m_gamma_kinv.mul_vec(&self.t_tau.mul_vec(e)).iter().map(|v| -v / h2).collect()
    }

    /// `‖k^{1/2} y‖²_Γ1` for a Γ1 trace `y`.
    pub fn feedback_norm_sq(&self, y: &[f64]) -> f64 {
        dot(y, &self.m_gamma_k.mul_vec(y))
    }

    pub fn fluxes(&self, x: &State) -> Fluxes {
        let mut b = self.m_mu.mul_vec(&x.h);
        b.iter_mut().zip(&self.w).for_each(|(v, w)| *v /= w);
        Fluxes {
            d: self.m_eps.mul_vec(&x.e),
            b,
        }
    }

    pub fn fields(&self, f: &Fluxes, guess: Option<&State>) -> Result<State> {
        let wb: Vec<f64> = f.b.iter().zip(&self.w).map(|(b, w)| b * w).collect();
        Ok(State {
            e: self.solve_eps(&f.d, guess.map(|g| g.e.as_slice()))?,
            h: self.solve_mu(&wb, guess.map(|g| g.h.as_slice()))?,
        })
    }

    /// Scaled divergence residuals `(‖Gᵀd‖ h/‖d‖, ‖D b‖ h/‖b‖)`.
    pub fn divergence_residuals(&self, f: &Fluxes) -> (f64, f64) {
        let rd = norm2(&self.g_int.transpose_mul_vec(&f.d));
        let rb = norm2(&self.div.mul_vec(&f.b));
        let nd = norm2(&f.d);
        let nb = norm2(&f.b);
        (
            if nd > 0.0 { rd * self.spacing / nd } else { rd },
            if nb > 0.0 { rb * self.spacing / nb } else { rb },
        )
    }

    pub fn restrict(&self, e_full: &[f64], h_full: &[f64]) -> State {
        State {
            e: self.edges.iter().map(|&i| e_full[i]).collect(),
            h: self.faces.iter().map(|&i| h_full[i]).collect(),
        }
    }

    pub fn extend(&self, x: &State) -> (Vec<f64>, Vec<f64>) {
        let mut e = vec![0.0; self.n_edges_full];
        let mut h = vec![0.0; self.n_faces_full];
        for (k, &i) in self.edges.iter().enumerate() {
            e[i] = x.e[k];
        }
        for (k, &i) in self.faces.iter().enumerate() {
            h[i] = x.h[k];
        }
        (e, h)
    }

    pub fn zero_state(&self) -> State {
        State {
            e: vec![0.0; self.n_e()],
            h: vec![0.0; self.n_h()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissipativityReport {
    /// Largest `|⟨Ax,x⟩_H + ‖k^{1/2} π×H‖²| / (|⟨Ax,x⟩_H| + ‖k^{1/2} π×H‖²)`.
    pub identity: f64,
    /// Largest `⟨Ax,x⟩_H / (‖Ax‖_H ‖x‖_H)`; positive values would break
    /// dissipativity.
    pub max_rate: f64,
    /// For Γ1 = ∅: largest `|⟨Ax,y⟩_H + ⟨x,Ay⟩_H| / (‖Ax‖‖y‖ + ‖x‖‖Ay‖)`.
    pub skew: Option<f64>,
}

pub fn random_free_state(gen: &Generator, rng: &mut ChaCha8Rng) -> State {
    State {
        e: (0..gen.n_e()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        h: (0..gen.n_h()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Checks the energy identity `Re⟨Ax,x⟩_H = −‖k^{1/2} π×H‖²_Γ1` on random
/// states, with `π×H` the trace implied by the feedback law.
pub fn check_dissipativity(gen: &Generator, probes: usize, seed: u64) -> Result<DissipativityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut identity = 0.0f64;
    let mut max_rate = f64::NEG_INFINITY;
    let mut skew: Option<f64> = (!gen.is_damped()).then_some(0.0);
    for _ in 0..probes {
        let x = random_free_state(gen, &mut rng);
        let ax = gen.apply(&x)?;
        let rate = gen.inner(&ax, &x);
        let y = gen.implied_twisted_trace(&x.e);
        let loss = gen.feedback_norm_sq(&y);
        let scale = rate.abs() + loss;
        if scale > 0.0 {
            identity = identity.max((rate + loss).abs() / scale);
        }
        max_rate = max_rate.max(rate / (gen.norm(&ax) * gen.norm(&x)));
        if let Some(s) = skew.as_mut() {
            let z = random_free_state(gen, &mut rng);
            let az = gen.apply(&z)?;
            let num = (gen.inner(&ax, &z) + gen.inner(&x, &az)).abs();
            let den = gen.norm(&ax) * gen.norm(&z) + gen.norm(&x) * gen.norm(&az);
            *s = s.max(num / den);
        }
    }
    Ok(DissipativityReport {
        identity,
        max_rate,
        skew,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrator {
    ImplicitMidpoint,
    /// Staggered leapfrog with the boundary damping treated by the trapezoidal
    /// rule; conditionally stable.
    Leapfrog,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub integrator: Integrator,
    pub krylov: SolverOptions,
    pub restart: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::ImplicitMidpoint,
            krylov: SolverOptions::new(1e-11, 500),
            restart: 60,
        }
    }
}

/// Precomputed stepping system for one step size.
pub struct Stepper<'a> {
    gen: &'a Generator,
    dt: f64,
    opts: StepOptions,
    /// `P − dt/2 S` (midpoint) or `M_ε + dt/2 R` (leapfrog).
    system: CsrMatrix,
    diag: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub fluxes: Fluxes,
    pub state: State,
    /// Energy removed in the step, `dt · e_mᵀ R e_m` at the midpoint.
    pub dissipated: f64,
    pub solve: SolveStats,
}

impl<'a> Stepper<'a> {
    pub fn new(gen: &'a Generator, dt: f64, opts: StepOptions) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
        }
        let system = match opts.integrator {
            Integrator::ImplicitMidpoint => gen.p_matrix().add(1.0, &gen.s_matrix(), -0.5 * dt),
            Integrator::Leapfrog => gen.m_eps.add(1.0, &gen.r, 0.5 * dt),
        };
        let diag = system.diagonal();
        Ok(Self {
            gen,
            dt,
            opts,
            system,
            diag,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `(f, x)` by one step; `x` must be the fields of `f`.
    pub fn step(&self, f: &Fluxes, x: &State) -> Result<StepOutcome> {
        match self.opts.integrator {
            Integrator::ImplicitMidpoint => self.midpoint(f, x),
            Integrator::Leapfrog => self.leapfrog(f, x),
        }
    }

    fn midpoint(&self, f: &Fluxes, x: &State) -> Result<StepOutcome> {
        let g = self.gen;
        let (ne, nh) = (g.n_e(), g.n_h());
        let mut rhs = f.d.clone();
        rhs.extend(f.b.iter().zip(&g.w).map(|(b, w)| b * w));
        let mut y = x.e.clone();
        y.extend_from_slice(&x.h);
        let solve = gmres(&self.system, Some(&self.diag), &rhs, &mut y, self.opts.restart, self.opts.krylov)?;
        let mid = State {
            e: y[..ne].to_vec(),
            h: y[ne..ne + nh].to_vec(),
        };
        let s = g.s_apply(&mid);
        let mut d = f.d.clone();
        axpy(self.dt, &s.e, &mut d);
        let mut b = f.b.clone();
        axpy(-self.dt, &g.c.mul_vec(&mid.e), &mut b);
        let fluxes = Fluxes { d, b };
        let guess = State {
            e: mid.e.iter().zip(&x.e).map(|(m, o)| 2.0 * m - o).collect(),
            h: mid.h.iter().zip(&x.h).map(|(m, o)| 2.0 * m - o).collect(),
        };
        let state = g.fields(&fluxes, Some(&guess))?;
        Ok(StepOutcome {
            fluxes,
            state,
            dissipated: self.dt * g.dissipation_rate(&mid.e),
            solve,
        })
    }

    fn leapfrog(&self, f: &Fluxes, x: &State) -> Result<StepOutcome> {
        let g = self.gen;
        let dt = self.dt;
        let mut b_half = f.b.clone();
        axpy(-0.5 * dt, &g.c.mul_vec(&x.e), &mut b_half);
        let wb: Vec<f64> = b_half.iter().zip(&g.w).map(|(b, w)| b * w).collect();
        let h_half = g.solve_mu(&wb, Some(&x.h))?;
        let mut rhs = f.d.clone();
        axpy(dt, &g.ctw.mul_vec(&h_half), &mut rhs);
        axpy(-0.5 * dt, &g.r.mul_vec(&x.e), &mut rhs);
        let mut e = x.e.clone();
        let solve = conjugate_gradient(&self.system, Some(&self.diag), &rhs, &mut e, self.opts.krylov)?;
        let em: Vec<f64> = e.iter().zip(&x.e).map(|(a, b)| 0.5 * (a + b)).collect();
        let d = g.m_eps.mul_vec(&e);
        let mut b = b_half;
        axpy(-0.5 * dt, &g.c.mul_vec(&e), &mut b);
        let fluxes = Fluxes { d, b };
        let wb: Vec<f64> = fluxes.b.iter().zip(&g.w).map(|(b, w)| b * w).collect();
        let h = g.solve_mu(&wb, Some(&h_half))?;
        Ok(StepOutcome {
            fluxes,
            state: State { e, h },
            dissipated: dt * g.dissipation_rate(&em),
            solve,
        })
    }
}

/// Sampled trajectory of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation_rate: Vec<f64>,
    pub norm_h: Vec<f64>,
    pub div_residual_d: Vec<f64>,
    pub div_residual_b: Vec<f64>,
    /// Largest normalized overlap with the harmonic fields.
    pub dist_cohomology: Vec<f64>,
    /// Energy after every step (index 0 is the initial energy).
    pub step_energy: Vec<f64>,
    /// Energy removed in every step.
    pub step_dissipated: Vec<f64>,
    /// `‖x0‖_H + ‖A x0‖_H`.
    pub graph_norm: f64,
    pub final_state: State,
}

impl TrajectoryRecord {
    /// `E(0) − E(T)` against the summed step dissipation, relative to `E(0)`.
    pub fn ledger_defect(&self) -> f64 {
        let e0 = self.step_energy[0];
        let e1 = *self.step_energy.last().unwrap();
        let lost: f64 = self.step_dissipated.iter().sum();
        if e0 > 0.0 {
            ((e0 - e1) - lost).abs() / e0
        } else {
            0.0
        }
    }

    /// Largest relative energy increase over one step.
    pub fn max_energy_increase(&self) -> f64 {
        let e0 = self.step_energy[0];
        self.step_energy
            .windows(2)
            .map(|w| (w[1] - w[0]) / e0.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulateOptions {
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub step: StepOptions,
    /// Abort when a divergence residual exceeds this.
    pub drift_tol: f64,
}

impl SimulateOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Self {
            t_final,
            dt,
            sample_every: 1,
            step: StepOptions::default(),
            drift_tol: 1e-8,
        }
    }
}

/// Harmonic fields restricted to the generator's free DOFs.
pub struct HarmonicOverlap {
    fields: Vec<State>,
}

impl HarmonicOverlap {
    pub fn new(gen: &Generator, e: &CohomologyBasis, h: &CohomologyBasis) -> Self {
        let zf_e = vec![0.0; gen.n_edges_full];
        let zf_h = vec![0.0; gen.n_faces_full];
        let mut fields = Vec::new();
        for j in 0..e.dim() {
            fields.push(gen.restrict(&e.field(j), &zf_h));
        }
        for j in 0..h.dim() {
            fields.push(gen.restrict(&zf_e, &h.field(j)));
        }
        Self { fields }
    }

    pub fn empty() -> Self {
        Self { fields: Vec::new() }
    }

    pub fn distance(&self, gen: &Generator, x: &State) -> f64 {
        let n = gen.norm(x);
        if n == 0.0 {
            return 0.0;
        }
        self.fields
            .iter()
            .map(|v| (gen.inner(v, x) / (n * gen.norm(v))).abs())
            .fold(0.0, f64::max)
    }
}

pub fn simulate(gen: &Generator, x0: &State, opts: &SimulateOptions, harmonic: &HarmonicOverlap) -> Result<TrajectoryRecord> {
    if !(opts.t_final >= 0.0) || opts.sample_every == 0 {
        return Err(Error::Invalid("final time must be non-negative and sample_every positive".into()));
    }
    let stepper = Stepper::new(gen, opts.dt, opts.step)?;
    let steps = (opts.t_final / opts.dt).round() as usize;
    let mut f = gen.fluxes(x0);
    let mut x = x0.clone();
    let ax0 = gen.apply(x0)?;
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        energy: Vec::new(),
        dissipation_rate: Vec::new(),
        norm_h: Vec::new(),
        div_residual_d: Vec::new(),
        div_residual_b: Vec::new(),
        dist_cohomology: Vec::new(),
        step_energy: vec![gen.energy(x0)],
        step_dissipated: Vec::new(),
        graph_norm: gen.norm(x0) + gen.norm(&ax0),
        final_state: x0.clone(),
    };
    let sample = |rec: &mut TrajectoryRecord, t: f64, x: &State, f: &Fluxes| -> Result<()> {
        let (rd, rb) = gen.divergence_residuals(f);
        if rd > opts.drift_tol || rb > opts.drift_tol {
            return Err(Error::Constraint {
                constraint: "divergence constraint drift during time stepping",
                residual: rd.max(rb),
                tol: opts.drift_tol,
            });
        }
        rec.times.push(t);
        rec.energy.push(gen.energy(x));
        rec.dissipation_rate.push(gen.dissipation_rate(&x.e));
        rec.norm_h.push(gen.norm(x));
        rec.div_residual_d.push(rd);
        rec.div_residual_b.push(rb);
        rec.dist_cohomology.push(harmonic.distance(gen, x));
        Ok(())
    };
    sample(&mut rec, 0.0, &x, &f)?;
    for n in 1..=steps {
        let out = stepper.step(&f, &x)?;
        f = out.fluxes;
        x = out.state;
        rec.step_energy.push(gen.energy(&x));
        rec.step_dissipated.push(out.dissipated);
        if n % opts.sample_every == 0 || n == steps {
            sample(&mut rec, n as f64 * opts.dt, &x, &f)?;
        }
    }
    rec.final_state = x;
    Ok(rec)
}

/// Normalized decay curves and their monotone envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub times: Vec<f64>,
    /// `‖x(t)‖_H / (‖x0‖_H + ‖Ax0‖_H)` per record, on `times`.
    pub curves: Vec<Vec<f64>>,
    /// Non-increasing hull of the pointwise maximum.
    pub envelope: Vec<f64>,
    /// Set when some record had to be interpolated onto the common grid.
    pub resampled: bool,
    /// Set when the envelope does not decay at all.
    pub non_decaying: bool,
}

fn interpolate(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return vs[0];
    }
    for i in 1..ts.len() {
        if t <= ts[i] {
            let a = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
            return vs[i - 1] + a * (vs[i] - vs[i - 1]);
        }
    }
    *vs.last().unwrap()
}

pub fn decay_envelope(records: &[TrajectoryRecord]) -> Result<Envelope> {
    let first = records
        .first()
        .ok_or_else(|| Error::Invalid("decay envelope needs at least one record".into()))?;
    let times = first.times.clone();
    let mut resampled = false;
    let mut curves = Vec::with_capacity(records.len());
    for r in records {
        let raw: Vec<f64> = r
            .norm_h
            .iter()
            .map(|n| if r.graph_norm > 0.0 { n / r.graph_norm } else { 0.0 })
            .collect();
        if r.times == times {
            curves.push(raw);
        } else {
            resampled = true;
            curves.push(times.iter().map(|&t| interpolate(&r.times, &raw, t)).collect());
        }
    }
    let mut envelope: Vec<f64> = (0..times.len())
        .map(|i| curves.iter().map(|c| c[i]).fold(0.0, f64::max))
        .collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let non_decaying = match (envelope.first(), envelope.last()) {
        (Some(a), Some(b)) => *a > 0.0 && (a - b).abs() <= 1e-9 * a,
        _ => true,
    };
    Ok(Envelope {
        times,
        curves,
        envelope,
        resampled,
        non_decaying,
    })
}

/// A smooth random state in the dynamic space: a few low Fourier modes
/// sampled on the grid and projected onto the divergence-free,
/// harmonic-orthogonal fields.
pub fn random_dynamic_state(
    model: &Model,
    gen: &Generator,
    cohom_e: &CohomologyBasis,
    cohom_h: &CohomologyBasis,
    max_wavenumber: usize,
    seed: u64,
) -> Result<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dm = &model.dofmap;
    let dims = dm.dims();
    let lengths: [f64; 3] = std::array::from_fn(|a| dims[a] as f64 * dm.spacing());
    let kmax = max_wavenumber.max(1);
    let mut modes = Vec::new();
    for _ in 0..6 {
        let k: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0..=kmax) as f64);
        let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        modes.push((k, phase, amp));
    }
    let eval = |x: [f64; 3], axis: usize, salt: f64| -> f64 {
        modes
            .iter()
            .map(|(k, ph, amp)| {
                let mut v = amp[axis];
                for a in 0..3 {
                    v *= (std::f64::consts::PI * k[a] * x[a] / lengths[a] + ph[a] + salt).cos();
                }
                v
            })
            .sum()
    };
    let mut e_full = vec![0.0; dm.n_edges()];
    for &i in &gen.edges {
        e_full[i] = eval(dm.edge_midpoint(i), dm.edge(i).0, 0.0);
    }
    let mut h_full = vec![0.0; dm.n_faces()];
    for &i in &gen.faces {
        h_full[i] = eval(dm.face_center(i), dm.face(i).0, 1.3);
    }
    let (e, h) = project_dynamic(model, &e_full, &h_full, cohom_e, cohom_h)?;
    Ok(gen.restrict(&e, &h))
}

/// Relative difference `‖x − y‖_H / ‖y‖_H`.
pub fn relative_difference(gen: &Generator, x: &State, y: &State) -> f64 {
    let d = State {
        e: sub(&x.e, &y.e),
        h: sub(&x.h, &y.h),
    };
    let n = gen.norm(y);
    if n > 0.0 {
        gen.norm(&d) / n
    } else {
        gen.norm(&d)
    }
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
    fn undamped_generator_is_skew() {
        let m = model(3, PartitionRule::undamped());
        let g = assemble_generator(&m);
        let r = check_dissipativity(&g, 10, 1).unwrap();
        assert!(r.skew.unwrap() < 1e-13, "{r:?}");
    }

    #[test]
    fn damped_identity_holds() {
        let m = model(3, PartitionRule::gamma1_sides(&[BoxSide::XMAX]));
        let g = assemble_generator(&m);
        let r = check_dissipativity(&g, 10, 2).unwrap();
        assert!(r.identity < 1e-12, "{r:?}");
        assert!(r.max_rate <= 0.0);
    }

    #[test]
    fn zero_state_stays_zero() {
        let m = model(2, PartitionRule::gamma1_sides(&[BoxSide::XMAX]));
        let g = assemble_generator(&m);
        let rec = simulate(&g, &g.zero_state(), &SimulateOptions::new(1.0, 0.25), &HarmonicOverlap::empty()).unwrap();
        assert!(rec.norm_h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn envelope_is_monotone_hull() {
        let mk = |norms: Vec<f64>| TrajectoryRecord {
            times: vec![0.0, 1.0, 2.0],
            energy: vec![],
            dissipation_rate: vec![],
            norm_h: norms,
            div_residual_d: vec![],
            div_residual_b: vec![],
            dist_cohomology: vec![],
            step_energy: vec![1.0],
            step_dissipated: vec![],
            graph_norm: 2.0,
            final_state: State { e: vec![], h: vec![] },
        };
        let env = decay_envelope(&[mk(vec![1.0, 0.4, 0.6]), mk(vec![0.8, 0.7, 0.1])]).unwrap();
        assert_eq!(env.envelope, vec![0.5, 0.35, 0.3]);
        assert!(!env.resampled && !env.non_decaying);
    }
}
