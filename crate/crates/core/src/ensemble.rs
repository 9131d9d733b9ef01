//! Disorder-averaged experiments.
//!
//! Realization `k` of every grid point draws its disorder from
//! `realization_seed(base_seed, k)`, so extending a grid never changes the
//! draws of existing points, and results do not depend on how the work is
//! scheduled across threads.

use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    beam_splitter_target, evolve_with, for_each_step, phase_rate, site_state, LEAKAGE_TOL,
};
use crate::model::{
    realization_seed, DisorderKind, DisorderSpec, Integrator, LatticeSpec, Schedule,
    TemporalPolicy,
};
use crate::multiparticle::{correlation, from_columns, noon_fidelity, noonity};
use crate::spectral::{self, diagonalize, in_gap_pair};
use crate::{Error, Result, WaveFunction};

/// Integrator steps per unit time for disorder resampled every step. The
/// step length is the noise correlation time, and residual infidelity of
/// the temporal regimes grows linearly with it.
pub const TEMPORAL_STEPS_PER_UNIT_TIME: usize = 80;

pub const DEFAULT_REALIZATIONS: usize = 100;
pub const DEFAULT_WINDOWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Single boson injected at site 1, fidelity to the beam-splitter target.
    BsFidelity,
    /// Bosons at sites 1 and 2N, fidelity to the NOON state.
    HomFidelity,
    /// Beam-splitter fidelity against a fixed target over a `t_final` grid.
    TfScan,
    /// Largest parity excursion `max_t |P(t) - P(0)|` from `(|1> + |2N>)/sqrt(2)`.
    ParityStudy,
    /// Mean over time windows of `|<D_f>|` of the upper in-gap eigenstate.
    DfStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub lattice: LatticeSpec,
    pub kind: ExperimentKind,
    pub t_finals: Vec<f64>,
    /// Fixed step count; `None` selects [`ensemble_schedule`]'s default.
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub integrator: Integrator,
    pub disorder_kind: DisorderKind,
    pub policy: TemporalPolicy,
    #[serde(default)]
    pub refresh_interval: Option<f64>,
    pub strengths: Vec<f64>,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Beam-splitter target phase. Defaults to the clean dynamical phase at
    /// each `t_final` for `bs_fidelity` and to `pi/2` for `tf_scan`.
    #[serde(default)]
    pub target_phase: Option<f64>,
    #[serde(default = "default_windows")]
    pub n_windows: usize,
}

fn default_realizations() -> usize {
    DEFAULT_REALIZATIONS
}

fn default_windows() -> usize {
    DEFAULT_WINDOWS
}

fn check_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(name, "grid has non-finite entries"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(name, "grid must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn new(
        kind: ExperimentKind,
        t_finals: Vec<f64>,
        disorder_kind: DisorderKind,
        policy: TemporalPolicy,
        strengths: Vec<f64>,
    ) -> Self {
        ExperimentConfig {
            lattice: LatticeSpec::default(),
            kind,
            t_finals,
            n_steps: None,
            integrator: Integrator::default(),
            disorder_kind,
            policy,
            refresh_interval: None,
            strengths,
            n_realizations: DEFAULT_REALIZATIONS,
            base_seed: 0,
            target_phase: None,
            n_windows: DEFAULT_WINDOWS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        check_grid("t_finals", &self.t_finals)?;
        check_grid("strengths", &self.strengths)?;
        if self.t_finals[0] <= 0.0 {
            return Err(Error::invalid("t_finals", "times must be positive"));
        }
        if self.n_realizations == 0 {
            return Err(Error::invalid("n_realizations", "need at least one realization"));
        }
        if self.n_windows == 0 {
            return Err(Error::invalid("n_windows", "need at least one window"));
        }
        if self.n_steps == Some(0) {
            return Err(Error::invalid("n_steps", "need at least one step"));
        }
        for &s in &self.strengths {
            self.disorder(s, 0).validate()?;
        }
        Ok(())
    }

    /// Disorder of realization `k` at strength `strength`.
    pub fn disorder(&self, strength: f64, k: usize) -> DisorderSpec {
        let mut d = DisorderSpec::new(
            self.disorder_kind,
            strength,
            self.policy,
            realization_seed(self.base_seed, k as u64),
        );
        d.refresh_interval = self.refresh_interval;
        d
    }

    pub fn schedule(&self, t_final: f64) -> Result<Schedule> {
        let sched = match self.n_steps {
            Some(n) => Schedule::with_steps(t_final, n)?,
            None => ensemble_schedule(t_final, &self.disorder(0.0, 0))?,
        };
        Ok(sched.with_integrator(self.integrator))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_realizations)
            .map(|k| realization_seed(self.base_seed, k as u64))
            .collect()
    }
}

/// Default schedule: the usual step count, refined to
/// [`TEMPORAL_STEPS_PER_UNIT_TIME`] when disorder is resampled every step.
pub fn ensemble_schedule(t_final: f64, dspec: &DisorderSpec) -> Result<Schedule> {
    let per_step = dspec.policy == TemporalPolicy::ResampleEveryStep
        && dspec.kind != DisorderKind::None
        && dspec.refresh_interval.is_none();
    if per_step {
        let n = (TEMPORAL_STEPS_PER_UNIT_TIME as f64 * t_final).ceil() as usize;
        Schedule::with_steps(t_final, n.max(Schedule::default_steps(t_final)))
    } else {
        Schedule::new(t_final)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stats {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub strength: f64,
    pub t_final: f64,
    pub stats: Stats,
    pub values: Vec<f64>,
    /// Realizations whose port leakage exceeded [`LEAKAGE_TOL`].
    pub flagged: Vec<bool>,
}

impl GridPoint {
    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    pub fn n_valid(&self) -> usize {
        self.flagged.len() - self.n_flagged()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// Strength-major, then `t_final`.
    pub points: Vec<GridPoint>,
}

impl EnsembleResult {
    pub fn point(&self, strength: f64, t_final: f64) -> Option<&GridPoint> {
        self.points
            .iter()
            .find(|p| p.strength == strength && p.t_final == t_final)
    }
}

/// Maps `f` over `0..n`, in parallel when the feature is enabled and
/// `workers != 1` (`0` uses every core). Output order follows the input.
fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))?;
        return pool.install(|| (0..n).into_par_iter().map(&f).collect());
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Final states of sites 1 and 2N plus optional time samples.
struct Run {
    first: WaveFunction,
    last: WaveFunction,
    samples: Vec<RunSample>,
}

/// Evolves only `|1>`.
fn run_first_port(spec: &LatticeSpec, sched: &Schedule, dspec: &DisorderSpec) -> Result<WaveFunction> {
    let block = DMatrix::from_column_slice(spec.n_sites(), 1, site_state(spec.n_sites(), 0).as_slice());
    Ok(crate::dynamics::evolve(spec, sched, dspec, block)?.column(0).into_owned())
}

#[derive(Debug, Clone, Copy)]
struct RunSample {
    t: f64,
    noon: f64,
    nity: f64,
    parity: f64,
}

impl RunSample {
    fn of(t: f64, a: &WaveFunction, b: &WaveFunction) -> Self {
        let pair = from_columns(a, b, false);
        let even = (a + b) / Complex64::from(2f64.sqrt());
        RunSample {
            t,
            noon: noon_fidelity(&pair),
            nity: noonity(&correlation(&pair)),
            parity: spectral::parity(&even),
        }
    }
}

fn port_leakage(psi: &WaveFunction) -> f64 {
    (1.0 - psi[0].norm_sqr() - psi[psi.len() - 1].norm_sqr()).max(0.0)
}

fn run_ports(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    sample_every: Option<usize>,
) -> Result<Run> {
    let n = spec.n_sites();
    let mut block = DMatrix::zeros(n, 2);
    block[(0, 0)] = Complex64::new(1.0, 0.0);
    block[(n - 1, 1)] = Complex64::new(1.0, 0.0);
    let mut samples = Vec::new();
    if sample_every.is_some() {
        samples.push(RunSample::of(0.0, &site_state(n, 0), &site_state(n, n - 1)));
    }
    evolve_with(spec, sched, dspec, &mut block, |view| {
        if let Some(every) = sample_every {
            if view.step % every.max(1) == 0 || view.step == sched.n_steps {
                let a = view.states.column(0).into_owned();
                let b = view.states.column(1).into_owned();
                samples.push(RunSample::of(view.t, &a, &b));
            }
        }
        Ok(())
    })?;
    Ok(Run {
        first: block.column(0).into_owned(),
        last: block.column(1).into_owned(),
        samples,
    })
}

/// Time-window averages of `D_f` for the upper in-gap eigenstate of the
/// midpoint Hamiltonian of every `stride`-th step.
fn in_gap_df_windows(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    n_windows: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; n_windows];
    let mut counts = vec![0usize; n_windows];
    for_each_step(spec, sched, dspec, |k, _, h| {
        if k % stride.max(1) == 0 {
            let t = sched.midpoint(k);
            let pair = in_gap_pair(&diagonalize(h), None, t)?;
            let w = ((k * n_windows) / sched.n_steps).min(n_windows - 1);
            sums[w] += spectral::distribution_difference(&pair.plus);
            counts[w] += 1;
        }
        Ok(())
    })?;
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect())
}

/// Diagonalization stride that keeps about 256 samples per window.
fn df_stride(n_steps: usize, n_windows: usize) -> usize {
    (n_steps / (n_windows * 256)).max(1)
}

/// One realization of an experiment: the observable and the flag.
fn measure(
    cfg: &ExperimentConfig,
    sched: &Schedule,
    dspec: &DisorderSpec,
    target_phase: f64,
) -> Result<(f64, bool)> {
    let spec = &cfg.lattice;
    match cfg.kind {
        ExperimentKind::BsFidelity | ExperimentKind::TfScan => {
            let psi = run_first_port(spec, sched, dspec)?;
            let target = beam_splitter_target(spec.n_cells, target_phase);
            Ok((target.dotc(&psi).norm(), port_leakage(&psi) > LEAKAGE_TOL))
        }
        ExperimentKind::HomFidelity => {
            let run = run_ports(spec, sched, dspec, None)?;
            let flag = port_leakage(&run.first).max(port_leakage(&run.last)) > LEAKAGE_TOL;
            Ok((noon_fidelity(&from_columns(&run.first, &run.last, false)), flag))
        }
        ExperimentKind::ParityStudy => {
            let run = run_ports(spec, sched, dspec, Some(1))?;
            let p0 = run.samples[0].parity;
            let drift = run.samples.iter().map(|s| (s.parity - p0).abs()).fold(0.0, f64::max);
            let flag = port_leakage(&run.first).max(port_leakage(&run.last)) > LEAKAGE_TOL;
            Ok((drift, flag))
        }
        ExperimentKind::DfStudy => {
            let stride = df_stride(sched.n_steps, cfg.n_windows);
            let windows = in_gap_df_windows(spec, sched, dspec, cfg.n_windows, stride)?;
            let mean_abs = windows.iter().map(|d| d.abs()).sum::<f64>() / windows.len() as f64;
            Ok((mean_abs, false))
        }
    }
}

fn target_phase_for(cfg: &ExperimentConfig, t_final: f64) -> Result<f64> {
    match (cfg.target_phase, cfg.kind) {
        (Some(phi), _) => Ok(phi),
        (None, ExperimentKind::TfScan) => Ok(FRAC_PI_2),
        (None, _) => Ok(phase_rate(&cfg.lattice)? * t_final),
    }
}

/// Runs every realization of every grid point on all available cores.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleResult> {
    run_ensemble_with(cfg, 0)
}

/// [`run_ensemble`] on `workers` threads (`0` = all cores, `1` = serial).
pub fn run_ensemble_with(cfg: &ExperimentConfig, workers: usize) -> Result<EnsembleResult> {
    cfg.validate()?;
    let grid: Vec<(f64, f64)> = cfg
        .strengths
        .iter()
        .flat_map(|&s| cfg.t_finals.iter().map(move |&t| (s, t)))
        .collect();
    let per_point = cfg.n_realizations;
    let mut contexts = Vec::with_capacity(cfg.t_finals.len());
    for &t in &cfg.t_finals {
        contexts.push((cfg.schedule(t)?, target_phase_for(cfg, t)?));
    }
    let n_t = cfg.t_finals.len();
    let raw = map_indexed(grid.len() * per_point, workers, |job| {
        let (point, k) = (job / per_point, job % per_point);
        let (strength, _) = grid[point];
        let (sched, phi) = &contexts[point % n_t];
        measure(cfg, sched, &cfg.disorder(strength, k), *phi)
    })?;
    let points = grid
        .iter()
        .zip(raw.chunks(per_point))
        .map(|(&(strength, t_final), chunk)| {
            let values: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            GridPoint {
                strength,
                t_final,
                stats: Stats::of(&values),
                values,
                flagged: chunk.iter().map(|r| r.1).collect(),
            }
        })
        .collect();
    Ok(EnsembleResult {
        config: cfg.clone(),
        seeds: cfg.seeds(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TfScanRow {
    pub t_final: f64,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TfScanTable {
    pub strength: f64,
    pub rows: Vec<TfScanRow>,
    /// `t_final` with the largest mean fidelity.
    pub argmax: f64,
    pub max: f64,
    /// Per realization: the best `t_final` and its fidelity.
    pub per_realization_best: Vec<(f64, f64)>,
}

/// Fidelity against `t_final` for a single strength and static disorder.
pub fn tf_scan(cfg: &ExperimentConfig) -> Result<TfScanTable> {
    tf_scan_with(cfg, 0)
}

pub fn tf_scan_with(cfg: &ExperimentConfig, workers: usize) -> Result<TfScanTable> {
    if cfg.policy != TemporalPolicy::Static && cfg.disorder_kind != DisorderKind::None {
        return Err(Error::invalid("policy", "t_final scans need static disorder"));
    }
    if cfg.strengths.len() != 1 {
        return Err(Error::invalid("strengths", "t_final scans take a single strength"));
    }
    let result = run_ensemble_with(cfg, workers)?;
    let rows: Vec<TfScanRow> = result
        .points
        .iter()
        .map(|p| TfScanRow {
            t_final: p.t_final,
            stats: p.stats,
        })
        .collect();
    let best = rows
        .iter()
        .fold(&rows[0], |b, r| if r.stats.mean > b.stats.mean { r } else { b });
    let per_realization_best = (0..cfg.n_realizations)
        .map(|k| {
            result
                .points
                .iter()
                .map(|p| (p.t_final, p.values[k]))
                .fold((f64::NAN, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b })
        })
        .collect();
    Ok(TfScanTable {
        strength: cfg.strengths[0],
        argmax: best.t_final,
        max: best.stats.mean,
        rows,
        per_realization_best,
    })
}

/// Disorder regimes distinguished by which symmetries survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BdiStatic,
    BdiTemporal,
    InvStatic,
    GenericStatic,
    GenericTemporal,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::BdiStatic,
        Regime::BdiTemporal,
        Regime::InvStatic,
        Regime::GenericStatic,
        Regime::GenericTemporal,
    ];

    pub fn disorder_kind(self) -> DisorderKind {
        match self {
            Regime::BdiStatic | Regime::BdiTemporal => DisorderKind::HoppingBdi,
            Regime::InvStatic => DisorderKind::OnsiteInversionSymmetric,
            Regime::GenericStatic | Regime::GenericTemporal => DisorderKind::OnsiteGeneric,
        }
    }

    pub fn policy(self) -> TemporalPolicy {
        match self {
            Regime::BdiTemporal | Regime::GenericTemporal => TemporalPolicy::ResampleEveryStep,
            _ => TemporalPolicy::Static,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::BdiStatic => "bdi_static",
            Regime::BdiTemporal => "bdi_temporal",
            Regime::InvStatic => "inv_static",
            Regime::GenericStatic => "generic_static",
            Regime::GenericTemporal => "generic_temporal",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid("regime", format!("unknown regime `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub lattice: LatticeSpec,
    pub regime: Regime,
    pub strength: f64,
    pub t_final: f64,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Steps between recorded samples.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_windows")]
    pub n_windows: usize,
}

fn default_sample_every() -> usize {
    64
}

impl StudyConfig {
    pub fn new(regime: Regime, strength: f64, t_final: f64) -> Self {
        StudyConfig {
            lattice: LatticeSpec::default(),
            regime,
            strength,
            t_final,
            n_steps: None,
            n_realizations: DEFAULT_REALIZATIONS,
            base_seed: 0,
            sample_every: default_sample_every(),
            n_windows: DEFAULT_WINDOWS,
        }
    }

    fn disorder(&self, k: usize) -> DisorderSpec {
        DisorderSpec::new(
            self.regime.disorder_kind(),
            self.strength,
            self.regime.policy(),
            realization_seed(self.base_seed, k as u64),
        )
    }

    fn schedule(&self) -> Result<Schedule> {
        match self.n_steps {
            Some(n) => Schedule::with_steps(self.t_final, n),
            None => ensemble_schedule(self.t_final, &self.disorder(0)),
        }
    }
}

/// Realization-averaged trajectories and end-point statistics of one
/// regime. HOM quantities start from `|1, 2N>`; parity starts from
/// `(|1> + |2N>)/sqrt(2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub config: StudyConfig,
    pub times: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    pub mean_nity: Vec<f64>,
    pub mean_parity: Vec<f64>,
    /// Mean correlation matrix at `t_final`.
    #[serde(skip)]
    pub final_gamma: DMatrix<f64>,
    pub final_fidelity: Stats,
    pub final_nity: Stats,
    /// Per-realization NOON fidelity and Nity at `t_final`.
    pub final_fidelities: Vec<f64>,
    pub final_nities: Vec<f64>,
    /// `max_t |<P(t)> - <P(0)>|` of the mean parity curve.
    pub parity_drift: f64,
    /// Window-averaged `D_f` of the upper in-gap state, realization mean.
    pub df_windows: Vec<f64>,
    /// Realization mean of `|window-averaged D_f|` per window.
    pub df_windows_abs: Vec<f64>,
    pub n_flagged: usize,
}

impl RegimeReport {
    /// Mean of [`df_windows_abs`](Self::df_windows_abs) over all windows.
    pub fn mean_abs_df(&self) -> f64 {
        self.df_windows_abs.iter().sum::<f64>() / self.df_windows_abs.len() as f64
    }
}

struct StudySample {
    run: Run,
    df: Vec<f64>,
    flagged: bool,
}

pub fn symmetry_regime_study(cfg: &StudyConfig) -> Result<RegimeReport> {
    symmetry_regime_study_with(cfg, 0)
}

pub fn symmetry_regime_study_with(cfg: &StudyConfig, workers: usize) -> Result<RegimeReport> {
    cfg.lattice.validate()?;
    if cfg.n_realizations == 0 {
        return Err(Error::invalid("n_realizations", "need at least one realization"));
    }
    if cfg.n_windows == 0 {
        return Err(Error::invalid("n_windows", "need at least one window"));
    }
    if cfg.sample_every == 0 {
        return Err(Error::invalid("sample_every", "must be positive"));
    }
    cfg.disorder(0).validate()?;
    let sched = cfg.schedule()?;
    let stride = df_stride(sched.n_steps, cfg.n_windows);
    let runs = map_indexed(cfg.n_realizations, workers, |k| {
        let dspec = cfg.disorder(k);
        let run = run_ports(&cfg.lattice, &sched, &dspec, Some(cfg.sample_every))?;
        let df = in_gap_df_windows(&cfg.lattice, &sched, &dspec, cfg.n_windows, stride)?;
        let flagged = port_leakage(&run.first).max(port_leakage(&run.last)) > LEAKAGE_TOL;
        Ok(StudySample { run, df, flagged })
    })?;

    let count = runs.len() as f64;
    let n_samples = runs[0].run.samples.len();
    let mean_of = |f: &dyn Fn(&RunSample) -> f64| -> Vec<f64> {
        (0..n_samples)
            .map(|i| runs.iter().map(|r| f(&r.run.samples[i])).sum::<f64>() / count)
            .collect()
    };
    let times = runs[0].run.samples.iter().map(|s| s.t).collect();
    let mean_fidelity = mean_of(&|s| s.noon);
    let mean_nity = mean_of(&|s| s.nity);
    let mean_parity = mean_of(&|s| s.parity);
    let parity_drift = mean_parity
        .iter()
        .map(|p| (p - mean_parity[0]).abs())
        .fold(0.0, f64::max);

    let n = cfg.lattice.n_sites();
    let mut final_gamma = DMatrix::zeros(n, n);
    let mut fid = Vec::with_capacity(runs.len());
    let mut nity = Vec::with_capacity(runs.len());
    for r in &runs {
        let gamma = correlation(&from_columns(&r.run.first, &r.run.last, false));
        nity.push(noonity(&gamma));
        fid.push(noon_fidelity(&from_columns(&r.run.first, &r.run.last, false)));
        final_gamma += gamma / count;
    }
    let df_windows = (0..cfg.n_windows)
        .map(|w| runs.iter().map(|r| r.df[w]).sum::<f64>() / count)
        .collect();
    let df_windows_abs = (0..cfg.n_windows)
        .map(|w| runs.iter().map(|r| r.df[w].abs()).sum::<f64>() / count)
        .collect();

    Ok(RegimeReport {
        config: cfg.clone(),
        times,
        mean_fidelity,
        mean_nity,
        mean_parity,
        final_gamma,
        final_fidelity: Stats::of(&fid),
        final_nity: Stats::of(&nity),
        final_fidelities: fid,
        final_nities: nity,
        parity_drift,
        df_windows,
        df_windows_abs,
        n_flagged: runs.iter().filter(|r| r.flagged).count(),
    })
}
