//! Time-ordered propagation through the adiabatic ramp.
//!
//! Step `k` covers `[t_k, t_k + dt]` and uses the disorder realization in
//! force for that step. The default scheme is the fourth-order
//! commutator-free Magnus product
//!
//! ```text
//! exp(-i dt (a2 H(t_k + c1 dt) + a1 H(t_k + c2 dt)))
//!     * exp(-i dt (a1 H(t_k + c1 dt) + a2 H(t_k + c2 dt)))
//! ```
//!
//! with Gauss nodes `c = 1/2 -+ sqrt(3)/6` and `a = 1/4 +- sqrt(3)/6`
//! (the right factor acts first). The second-order midpoint rule
//! `exp(-i H(t_k + dt/2) dt)` is available through [`Integrator`].
//! Exponentials of the tridiagonal generators are applied by a Taylor
//! series truncated at machine precision (with substepping when
//! `|H| dt > 1/2`), so every step is unitary to rounding error.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::model::{
    hamiltonian_at, intracell_amplitude, sample_disorder, DisorderDraw, DisorderKind,
    DisorderSpec, Hamiltonian, Integrator, LatticeSpec, Schedule,
};
use crate::spectral::{self, diagonalize, in_gap_pair, EdgePair};
use crate::{Error, Result, WaveFunction};

/// Tolerance on the probability change when the step count is doubled.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Leakage out of the port subspace above which a run is flagged.
pub const LEAKAGE_TOL: f64 = 0.01;
/// Default number of samples for the dynamical-phase quadrature.
pub const PHASE_SAMPLES: usize = 2048;

const MAX_TAYLOR_ORDER: usize = 60;

/// Scratch space for applying `exp(-i H dt)` to a block of column vectors.
#[derive(Debug, Default)]
pub struct StepKernel {
    term: Vec<Complex64>,
    next: Vec<Complex64>,
}

impl StepKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces every column of `states` by `exp(-i H dt)` applied to it.
    pub fn apply(&mut self, h: &Hamiltonian, dt: f64, states: &mut DMatrix<Complex64>) {
        let n = h.n_sites();
        debug_assert_eq!(states.nrows(), n);
        self.term.resize(n, Complex64::default());
        self.next.resize(n, Complex64::default());
        let substeps = (h.norm_bound() * dt.abs() / 0.5).ceil().max(1.0) as usize;
        let tau = dt / substeps as f64;
        for mut col in states.column_iter_mut() {
            let acc = col.as_mut_slice();
            for _ in 0..substeps {
                self.term.copy_from_slice(acc);
                for k in 1..=MAX_TAYLOR_ORDER {
                    h.apply(&self.term, &mut self.next);
                    let factor = Complex64::new(0.0, -tau / k as f64);
                    let mut size = 0.0f64;
                    for ((t, nx), a) in self.term.iter_mut().zip(&self.next).zip(acc.iter_mut()) {
                        *t = nx * factor;
                        *a += *t;
                        size = size.max(t.norm_sqr());
                    }
                    if size < 1e-36 {
                        break;
                    }
                }
            }
        }
    }
}

/// Draws realizations lazily, reusing the current one while its index is
/// unchanged.
struct DrawCache<'a> {
    dspec: &'a DisorderSpec,
    n_sites: usize,
    current: Option<(u64, DisorderDraw)>,
}

impl<'a> DrawCache<'a> {
    fn new(dspec: &'a DisorderSpec, n_sites: usize) -> Self {
        DrawCache {
            dspec,
            n_sites,
            current: None,
        }
    }

    fn get(&mut self, step: usize, dt: f64) -> Option<&DisorderDraw> {
        if self.dspec.kind == DisorderKind::None {
            return None;
        }
        let index = self.dspec.draw_index(step, dt);
        if self.current.as_ref().map(|(i, _)| *i) != Some(index) {
            self.current = Some((index, sample_disorder(self.dspec, self.n_sites, index)));
        }
        self.current.as_ref().map(|(_, d)| d)
    }
}

/// What an observer sees after each completed step.
pub struct StepView<'a> {
    /// Number of completed steps.
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    /// Hamiltonian at the midpoint of the step.
    pub h: &'a Hamiltonian,
    pub states: &'a DMatrix<Complex64>,
}

/// Walks the schedule, handing `f` the step index, the generators of the
/// step in the order they act (each applied for a full `dt`) and the
/// midpoint Hamiltonian.
pub(crate) fn for_each_step<F>(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    mut f: F,
) -> Result<()>
where
    F: FnMut(usize, &[Hamiltonian], &Hamiltonian) -> Result<()>,
{
    spec.validate()?;
    dspec.validate()?;
    let dt = sched.dt();
    let mut draws = DrawCache::new(dspec, spec.n_sites());
    let root3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - root3 / 6.0, 0.5 + root3 / 6.0);
    let (a1, a2) = (0.25 + root3 / 6.0, 0.25 - root3 / 6.0);
    for k in 0..sched.n_steps {
        let t_k = k as f64 * dt;
        let draw = draws.get(k, dt);
        let v = intracell_amplitude(sched.midpoint(k), spec, sched)?;
        let h = hamiltonian_at(spec.n_cells, v, draw, dspec)?;
        match sched.integrator {
            Integrator::Midpoint => f(k, std::slice::from_ref(&h), &h)?,
            Integrator::Magnus4 => {
                let v1 = intracell_amplitude(t_k + c1 * dt, spec, sched)?;
                let v2 = intracell_amplitude(t_k + c2 * dt, spec, sched)?;
                let h1 = hamiltonian_at(spec.n_cells, v1, draw, dspec)?;
                let h2 = hamiltonian_at(spec.n_cells, v2, draw, dspec)?;
                let factors = [
                    Hamiltonian::combine(a1, &h1, a2, &h2),
                    Hamiltonian::combine(a2, &h1, a1, &h2),
                ];
                f(k, &factors, &h)?;
            }
        }
    }
    Ok(())
}

/// Evolves the columns of `states` through the whole schedule, calling
/// `observe` after every step.
pub fn evolve_with<F>(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    states: &mut DMatrix<Complex64>,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(StepView<'_>) -> Result<()>,
{
    if states.nrows() != spec.n_sites() {
        return Err(Error::invalid(
            "states",
            format!("{} rows for {} sites", states.nrows(), spec.n_sites()),
        ));
    }
    let dt = sched.dt();
    let mut kernel = StepKernel::new();
    for_each_step(spec, sched, dspec, |k, factors, h| {
        for g in factors {
            kernel.apply(g, dt, states);
        }
        observe(StepView {
            step: k + 1,
            t: (k + 1) as f64 * dt,
            h,
            states,
        })
    })
}

/// Evolves a block of states without observation.
pub fn evolve(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    mut states: DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    evolve_with(spec, sched, dspec, &mut states, |_| Ok(()))?;
    Ok(states)
}

pub fn evolve_state(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    psi0: &WaveFunction,
) -> Result<WaveFunction> {
    let block = DMatrix::from_column_slice(psi0.len(), 1, psi0.as_slice());
    Ok(evolve(spec, sched, dspec, block)?.column(0).into_owned())
}

/// Basis state `|site>` (0-based).
pub fn site_state(n_sites: usize, site: usize) -> WaveFunction {
    let mut psi = WaveFunction::zeros(n_sites);
    psi[site] = Complex64::new(1.0, 0.0);
    psi
}

/// `(|1> + sign |2N>) / sqrt(2)`.
pub fn end_superposition(n_sites: usize, sign: f64) -> WaveFunction {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = WaveFunction::zeros(n_sites);
    psi[0] = Complex64::new(s, 0.0);
    psi[n_sites - 1] = Complex64::new(sign * s, 0.0);
    psi
}

/// Single-particle evolution operator over the full schedule.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub u: DMatrix<Complex64>,
    pub t_final: f64,
    pub n_steps: usize,
}

impl Propagator {
    /// `max |U^dagger U - 1|`.
    pub fn unitarity_error(&self) -> f64 {
        unitarity_error(&self.u)
    }

    /// `|<to|U|from>|^2`.
    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.u[(to, from)].norm_sqr()
    }
}

pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let n = u.ncols();
    crate::max_modulus(&(u.adjoint() * u - DMatrix::identity(n, n)))
}

/// Time-ordered product of the step operators over the schedule.
pub fn propagate(spec: &LatticeSpec, sched: &Schedule, dspec: &DisorderSpec) -> Result<Propagator> {
    let n = spec.n_sites();
    let u = evolve(spec, sched, dspec, DMatrix::identity(n, n))?;
    Ok(Propagator {
        u,
        t_final: sched.t_final,
        n_steps: sched.n_steps,
    })
}

/// [`propagate`] plus a step-doubling check on every transition
/// probability. Temporal disorder changes with the step width, so the check
/// is skipped there.
pub fn propagate_checked(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
) -> Result<Propagator> {
    let coarse = propagate(spec, sched, dspec)?;
    if dspec.is_temporal() {
        return Ok(coarse);
    }
    let fine_sched = Schedule::with_steps(sched.t_final, 2 * sched.n_steps)?;
    let fine = propagate(spec, &fine_sched, dspec)?;
    let change = coarse
        .u
        .iter()
        .zip(fine.u.iter())
        .map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).abs())
        .fold(0.0, f64::max);
    if change > CONVERGENCE_TOL {
        return Err(Error::NotConverged {
            change,
            suggested_steps: 4 * sched.n_steps,
        });
    }
    Ok(coarse)
}

/// Dynamical phase of the in-gap pair and the sampled energies.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    /// `int (E+ - E-)/2 dt`, equal to `int E+ dt` for chiral spectra.
    pub phi_d: f64,
    pub times: Vec<f64>,
    pub e_plus: Vec<f64>,
    pub e_minus: Vec<f64>,
}

pub fn dynamical_phase(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
) -> Result<PhaseReport> {
    dynamical_phase_sampled(spec, sched, dspec, PHASE_SAMPLES)
}

/// Trapezoidal integral over `n_samples + 1` equally spaced times of the
/// exactly diagonalized in-gap energies. Temporal disorder uses the
/// realization of the step containing each sample time.
pub fn dynamical_phase_sampled(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    n_samples: usize,
) -> Result<PhaseReport> {
    spec.validate()?;
    dspec.validate()?;
    let n_samples = n_samples.max(2);
    let dt = sched.dt();
    let mut draws = DrawCache::new(dspec, spec.n_sites());
    let mut previous: Option<EdgePair> = None;
    let mut report = PhaseReport {
        phi_d: 0.0,
        times: Vec::with_capacity(n_samples + 1),
        e_plus: Vec::with_capacity(n_samples + 1),
        e_minus: Vec::with_capacity(n_samples + 1),
    };
    for j in 0..=n_samples {
        let t = sched.t_final * j as f64 / n_samples as f64;
        let step = ((t / dt) as usize).min(sched.n_steps - 1);
        let v = spec.v0 * (PI * j as f64 / n_samples as f64).sin();
        let h = hamiltonian_at(spec.n_cells, v, draws.get(step, dt), dspec)?;
        let pair = in_gap_pair(&diagonalize(&h), previous.as_ref(), t)?;
        report.times.push(t);
        report.e_plus.push(pair.e_plus);
        report.e_minus.push(pair.e_minus);
        previous = Some(pair);
    }
    let h = sched.t_final / n_samples as f64;
    let half_split: Vec<f64> = report
        .e_plus
        .iter()
        .zip(&report.e_minus)
        .map(|(p, m)| 0.5 * (p - m))
        .collect();
    let interior: f64 = half_split[1..n_samples].iter().sum();
    report.phi_d = h * (interior + 0.5 * (half_split[0] + half_split[n_samples]));
    Ok(report)
}

/// Mean clean in-gap splitting `(1/pi) int_0^pi E+(theta) dtheta`, i.e.
/// the dynamical phase per unit of `t_final`.
pub fn phase_rate(spec: &LatticeSpec) -> Result<f64> {
    let unit = Schedule::with_steps(1.0, 1)?;
    Ok(dynamical_phase(spec, &unit, &DisorderSpec::clean())?.phi_d)
}

/// `t_final` that makes the clean chain accumulate `target_phase`.
pub fn calibrate_t_final(spec: &LatticeSpec, target_phase: f64) -> Result<f64> {
    if !(target_phase > 0.0 && target_phase.is_finite()) {
        return Err(Error::invalid("target_phase", format!("{target_phase} must be > 0")));
    }
    Ok(target_phase / phase_rate(spec)?)
}

/// Port statistics of one beam-splitter run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PortDistribution {
    /// Probability at site 1.
    pub port1: f64,
    /// Probability at site 2N.
    pub port2: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BeamSplitterRow {
    pub phi_d: f64,
    pub t_final: f64,
    pub from_port1: PortDistribution,
    pub from_port2: PortDistribution,
    /// Leakage above [`LEAKAGE_TOL`] in either run.
    pub flagged: bool,
}

/// Port distributions of a propagator for inputs at site 1 and site 2N.
pub fn port_distributions(u: &DMatrix<Complex64>) -> (PortDistribution, PortDistribution) {
    let last = u.nrows() - 1;
    let dist = |from: usize| {
        let port1 = u[(0, from)].norm_sqr();
        let port2 = u[(last, from)].norm_sqr();
        PortDistribution {
            port1,
            port2,
            leakage: (1.0 - port1 - port2).max(0.0),
        }
    };
    (dist(0), dist(last))
}

/// Runs the clean chain at the calibrated `t_final` of every phase in
/// `phases`. Only the two end-site columns of the propagator are evolved.
pub fn beam_splitter_scan(spec: &LatticeSpec, phases: &[f64]) -> Result<Vec<BeamSplitterRow>> {
    let rate = phase_rate(spec)?;
    let n = spec.n_sites();
    phases
        .iter()
        .map(|&phi| {
            if !(phi > 0.0) {
                return Err(Error::invalid("phi_d", format!("{phi} must be > 0")));
            }
            let t_final = phi / rate;
            let sched = Schedule::new(t_final)?;
            let mut block = DMatrix::zeros(n, n);
            block[(0, 0)] = Complex64::new(1.0, 0.0);
            block[(n - 1, n - 1)] = Complex64::new(1.0, 0.0);
            let u = evolve(spec, &sched, &DisorderSpec::clean(), block)?;
            let (from_port1, from_port2) = port_distributions(&u);
            Ok(BeamSplitterRow {
                phi_d: phi,
                t_final,
                from_port1,
                from_port2,
                flagged: from_port1.leakage > LEAKAGE_TOL || from_port2.leakage > LEAKAGE_TOL,
            })
        })
        .collect()
}

/// Target state of the beam splitter for input at site 1:
/// `cos(phi)|1> + (-1)^N i sin(phi)|2N>`.
pub fn beam_splitter_target(n_cells: usize, phi: f64) -> WaveFunction {
    let n_sites = 2 * n_cells;
    let sign = if n_cells % 2 == 0 { 1.0 } else { -1.0 };
    let mut psi = WaveFunction::zeros(n_sites);
    psi[0] = Complex64::new(phi.cos(), 0.0);
    psi[n_sites - 1] = Complex64::new(0.0, sign * phi.sin());
    psi
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryOptions {
    /// Record every this many steps (the initial and final states are
    /// always recorded).
    pub sample_every: usize,
    /// Diagonalize at every sample and record the in-gap population.
    pub track_in_gap: bool,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            sample_every: 64,
            track_in_gap: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    /// `<psi| I |psi>`.
    pub parity: f64,
    pub distribution_difference: f64,
    /// Population of the instantaneous in-gap pair.
    pub in_gap_population: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<WaveFunction>,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

fn sample_of(t: f64, psi: &WaveFunction, h: Option<&Hamiltonian>) -> Result<TrajectorySample> {
    let in_gap_population = match h {
        Some(h) => Some(in_gap_pair(&diagonalize(h), None, t)?.population(psi)),
        None => None,
    };
    Ok(TrajectorySample {
        t,
        parity: spectral::parity(psi),
        distribution_difference: spectral::distribution_difference(psi),
        in_gap_population,
    })
}

/// Records `psi(t)` and its observables along the evolution. The in-gap
/// population at a sample uses the Hamiltonian of the step that just ended
/// (the `t = 0` Hamiltonian for the initial sample).
pub fn trajectory(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    psi0: &WaveFunction,
    opts: TrajectoryOptions,
) -> Result<Trajectory> {
    let every = opts.sample_every.max(1);
    let h0 = if opts.track_in_gap {
        let mut draws = DrawCache::new(dspec, spec.n_sites());
        Some(hamiltonian_at(spec.n_cells, 0.0, draws.get(0, sched.dt()), dspec)?)
    } else {
        None
    };
    let mut out = Trajectory {
        states: vec![psi0.clone()],
        samples: vec![sample_of(0.0, psi0, h0.as_ref())?],
    };
    let mut block = DMatrix::from_column_slice(psi0.len(), 1, psi0.as_slice());
    evolve_with(spec, sched, dspec, &mut block, |view| {
        if view.step % every == 0 || view.step == sched.n_steps {
            let psi = view.states.column(0).into_owned();
            let h = opts.track_in_gap.then_some(view.h);
            out.samples.push(sample_of(view.t, &psi, h)?);
            out.states.push(psi);
        }
        Ok(())
    })?;
    Ok(out)
}

/// Parity `<I>` along the evolution of `psi0`.
pub fn parity_trajectory(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    psi0: &WaveFunction,
    sample_every: usize,
) -> Result<Trajectory> {
    trajectory(
        spec,
        sched,
        dspec,
        psi0,
        TrajectoryOptions {
            sample_every,
            track_in_gap: false,
        },
    )
}

/// Largest population outside the instantaneous in-gap pair over the
/// recorded samples.
pub fn adiabaticity_metric(traj: &Trajectory) -> Result<f64> {
    traj.samples.iter().try_fold(0.0f64, |acc, s| {
        let pop = s
            .in_gap_population
            .ok_or(Error::MissingObservable("in_gap_population"))?;
        Ok(acc.max(1.0 - pop))
    })
}
