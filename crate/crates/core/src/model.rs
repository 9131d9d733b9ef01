//! Lattice geometry, the adiabatic schedule, disorder realizations and the
//! real-space single-particle Hamiltonian.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Intercell hopping. Fixed energy unit.
pub const INTERCELL_HOPPING: f64 = 1.0;

/// Geometry and hopping parameters of an open SSH chain with `n_cells`
/// two-site unit cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSpec {
    pub n_cells: usize,
    /// Peak of the intracell hopping during the ramp, in units of `w`.
    pub v0: f64,
}

impl LatticeSpec {
    pub fn new(n_cells: usize, v0: f64) -> Result<Self> {
        let spec = LatticeSpec { n_cells, v0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 2 {
            return Err(Error::invalid("n_cells", format!("{} < 2", self.n_cells)));
        }
        if !(0.0..1.0).contains(&self.v0) {
            return Err(Error::invalid(
                "v0",
                format!("{} outside [0, 1): the chain must stay topological", self.v0),
            ));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }

    pub fn w(&self) -> f64 {
        INTERCELL_HOPPING
    }
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            n_cells: 8,
            v0: 0.6,
        }
    }
}

/// Time-stepping scheme of the propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `exp(-i H(t + dt/2) dt)`; second order.
    Midpoint,
    /// Two exponentials of Gauss-point combinations of `H`; fourth order.
    #[default]
    Magnus4,
}

/// Linear ramp `theta(t) = pi t / t_final`, discretized into `n_steps`
/// integrator steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_final: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub integrator: Integrator,
}

impl Schedule {
    /// Uses the default step count `max(4096, ceil(40 t_final))`.
    pub fn new(t_final: f64) -> Result<Self> {
        Self::with_steps(t_final, Self::default_steps(t_final))
    }

    pub fn with_steps(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid("t_final", format!("{t_final} must be > 0")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be >= 1"));
        }
        Ok(Schedule {
            t_final,
            n_steps,
            integrator: Integrator::default(),
        })
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn default_steps(t_final: f64) -> usize {
        4096.max((40.0 * t_final).ceil() as usize)
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn theta(&self, t: f64) -> f64 {
        PI * t / self.t_final
    }

    /// Midpoint time of step `k`.
    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.t_final;
        if t < -slack || t > self.t_final + slack || t.is_nan() {
            return Err(Error::TimeOutOfRange {
                t,
                t_final: self.t_final,
            });
        }
        Ok(())
    }
}

/// `v(t) = v0 sin(pi t / t_final)`.
pub fn intracell_amplitude(t: f64, spec: &LatticeSpec, sched: &Schedule) -> Result<f64> {
    sched.check_time(t)?;
    Ok(spec.v0 * sched.theta(t).sin())
}

/// Time derivative of [`intracell_amplitude`].
pub fn intracell_rate(t: f64, spec: &LatticeSpec, sched: &Schedule) -> Result<f64> {
    sched.check_time(t)?;
    Ok(spec.v0 * PI / sched.t_final * sched.theta(t).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKind {
    None,
    /// Real hopping disorder; keeps chiral and time-reversal symmetry.
    HoppingBdi,
    /// Uncorrelated on-site energies; breaks chiral and inversion symmetry.
    OnsiteGeneric,
    /// On-site energies mirrored about the chain center.
    OnsiteInversionSymmetric,
}

impl DisorderKind {
    /// Number of random numbers in one draw for a chain of `n_sites`.
    pub fn draw_len(self, n_sites: usize) -> usize {
        match self {
            DisorderKind::None => 0,
            DisorderKind::HoppingBdi => n_sites - 1,
            DisorderKind::OnsiteGeneric | DisorderKind::OnsiteInversionSymmetric => n_sites,
        }
    }

    pub fn is_onsite(self) -> bool {
        matches!(
            self,
            DisorderKind::OnsiteGeneric | DisorderKind::OnsiteInversionSymmetric
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalPolicy {
    /// One realization for the whole evolution.
    Static,
    /// Fresh realization for every integrator step (or every
    /// `refresh_interval` if set).
    ResampleEveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub kind: DisorderKind,
    /// `xi` for hopping disorder, `zeta` for on-site disorder, in units of `w`.
    pub strength: f64,
    pub policy: TemporalPolicy,
    /// Correlation time of temporal disorder in `1/w`. `None` resamples at
    /// every integrator step.
    #[serde(default)]
    pub refresh_interval: Option<f64>,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn clean() -> Self {
        DisorderSpec {
            kind: DisorderKind::None,
            strength: 0.0,
            policy: TemporalPolicy::Static,
            refresh_interval: None,
            seed: 0,
        }
    }

    pub fn new(kind: DisorderKind, strength: f64, policy: TemporalPolicy, seed: u64) -> Self {
        DisorderSpec {
            kind,
            strength,
            policy,
            refresh_interval: None,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = strength;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid(
                "strength",
                format!("{} must be finite and >= 0", self.strength),
            ));
        }
        if let Some(dt) = self.refresh_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid("refresh_interval", format!("{dt} must be > 0")));
            }
        }
        Ok(())
    }

    /// True when the Hamiltonian changes randomly during the evolution.
    pub fn is_temporal(&self) -> bool {
        self.kind != DisorderKind::None
            && self.strength > 0.0
            && self.policy == TemporalPolicy::ResampleEveryStep
    }

    /// Index of the realization in force during integrator step `step` of
    /// width `dt`.
    pub fn draw_index(&self, step: usize, dt: f64) -> u64 {
        match self.policy {
            TemporalPolicy::Static => 0,
            TemporalPolicy::ResampleEveryStep => match self.refresh_interval {
                None => step as u64,
                Some(interval) => ((step as f64 + 0.5) * dt / interval).floor() as u64,
            },
        }
    }
}

/// One realization of the uniform random numbers `r_n` in `[-0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderDraw {
    pub kind: DisorderKind,
    pub r: Vec<f64>,
}

/// Draws realization `index` of `dspec` for a chain of `n_sites`.
///
/// The stream is ChaCha8 seeded with `dspec.seed` and positioned on stream
/// `index`, so any `(seed, index)` pair is reproducible on its own and
/// independent of evaluation order. Static disorder always returns index 0.
pub fn sample_disorder(dspec: &DisorderSpec, n_sites: usize, index: u64) -> DisorderDraw {
    let index = match dspec.policy {
        TemporalPolicy::Static => 0,
        TemporalPolicy::ResampleEveryStep => index,
    };
    let len = dspec.kind.draw_len(n_sites);
    let mut rng = ChaCha8Rng::seed_from_u64(dspec.seed);
    rng.set_stream(index);
    let r = match dspec.kind {
        DisorderKind::OnsiteInversionSymmetric => {
            let half: Vec<f64> = (0..n_sites / 2).map(|_| uniform_centered(&mut rng)).collect();
            (0..n_sites)
                .map(|n| half[n.min(n_sites - 1 - n)])
                .collect()
        }
        _ => (0..len).map(|_| uniform_centered(&mut rng)).collect(),
    };
    DisorderDraw { kind: dspec.kind, r }
}

fn uniform_centered<R: Rng>(rng: &mut R) -> f64 {
    rng.gen::<f64>() - 0.5
}

/// Seed of realization `k` in an ensemble keyed by `base_seed`.
///
/// SplitMix64 finalizer over the pair; depends on nothing but `(base, k)`,
/// so growing a grid or reordering work never changes a realization.
pub fn realization_seed(base_seed: u64, k: u64) -> u64 {
    let mut z = base_seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Real symmetric tridiagonal single-particle Hamiltonian.
///
/// `hopping[b]` couples sites `b` and `b + 1`; `onsite[n]` is the energy of
/// site `n`. Every term the model produces is real, so this is the full
/// Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub onsite: Vec<f64>,
    pub hopping: Vec<f64>,
}

impl Hamiltonian {
    pub fn n_sites(&self) -> usize {
        self.onsite.len()
    }

    pub fn to_real_dense(&self) -> DMatrix<f64> {
        let n = self.n_sites();
        let mut m = DMatrix::zeros(n, n);
        for (i, &e) in self.onsite.iter().enumerate() {
            m[(i, i)] = e;
        }
        for (b, &t) in self.hopping.iter().enumerate() {
            m[(b, b + 1)] = t;
            m[(b + 1, b)] = t;
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        self.to_real_dense().map(|x| Complex64::new(x, 0.0))
    }

    /// `out = H x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n_sites();
        assert!(x.len() == n && out.len() == n && n >= 2);
        let (d, t) = (&self.onsite[..n], &self.hopping[..n - 1]);
        out[0] = x[0] * d[0] + x[1] * t[0];
        for i in 1..n - 1 {
            out[i] = x[i] * d[i] + x[i - 1] * t[i - 1] + x[i + 1] * t[i];
        }
        out[n - 1] = x[n - 1] * d[n - 1] + x[n - 2] * t[n - 2];
    }

    /// `a * x + b * y` for two Hamiltonians on the same chain.
    pub fn combine(a: f64, x: &Hamiltonian, b: f64, y: &Hamiltonian) -> Hamiltonian {
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(p, q)| a * p + b * q).collect();
        Hamiltonian {
            onsite: mix(&x.onsite, &y.onsite),
            hopping: mix(&x.hopping, &y.hopping),
        }
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let n = self.n_sites();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.hopping[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { self.hopping[i].abs() } else { 0.0 };
                self.onsite[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }
}

/// Hamiltonian with intracell hopping `v`, intercell hopping `w = 1` and the
/// disorder of `draw`.
///
/// Hopping disorder multiplies both bond families, `v (1 + xi r_odd)` and
/// `w (1 + xi r_even)` (1-based bond labels); on-site disorder adds
/// `zeta r_n` to the diagonal.
pub fn hamiltonian_at(
    n_cells: usize,
    v: f64,
    draw: Option<&DisorderDraw>,
    dspec: &DisorderSpec,
) -> Result<Hamiltonian> {
    dspec.validate()?;
    let n_sites = 2 * n_cells;
    let mut onsite = vec![0.0; n_sites];
    let mut hopping: Vec<f64> = (0..n_sites - 1)
        .map(|b| if b % 2 == 0 { v } else { INTERCELL_HOPPING })
        .collect();

    if dspec.kind != DisorderKind::None {
        let draw = draw.ok_or(Error::DrawLength {
            expected: dspec.kind.draw_len(n_sites),
            got: 0,
        })?;
        let expected = dspec.kind.draw_len(n_sites);
        if draw.r.len() != expected || draw.kind != dspec.kind {
            return Err(Error::DrawLength {
                expected,
                got: draw.r.len(),
            });
        }
        let s = dspec.strength;
        match dspec.kind {
            DisorderKind::HoppingBdi => {
                for (t, r) in hopping.iter_mut().zip(&draw.r) {
                    *t *= 1.0 + s * r;
                }
            }
            DisorderKind::OnsiteGeneric | DisorderKind::OnsiteInversionSymmetric => {
                for (e, r) in onsite.iter_mut().zip(&draw.r) {
                    *e = s * r;
                }
            }
            DisorderKind::None => unreachable!(),
        }
    }
    Ok(Hamiltonian { onsite, hopping })
}

/// Hamiltonian at time `t` of the schedule.
pub fn build_hamiltonian(
    t: f64,
    spec: &LatticeSpec,
    sched: &Schedule,
    draw: Option<&DisorderDraw>,
    dspec: &DisorderSpec,
) -> Result<Hamiltonian> {
    let v = intracell_amplitude(t, spec, sched)?;
    hamiltonian_at(spec.n_cells, v, draw, dspec)
}

/// `dH/dt` at time `t` for a fixed disorder realization. Only the intracell
/// bonds move; static on-site terms drop out.
pub fn hamiltonian_rate(
    t: f64,
    spec: &LatticeSpec,
    sched: &Schedule,
    draw: Option<&DisorderDraw>,
    dspec: &DisorderSpec,
) -> Result<Hamiltonian> {
    let dv = intracell_rate(t, spec, sched)?;
    let h = hamiltonian_at(spec.n_cells, dv, draw, dspec)?;
    let onsite = vec![0.0; h.n_sites()];
    let hopping = h
        .hopping
        .iter()
        .enumerate()
        .map(|(b, &x)| if b % 2 == 0 { x } else { 0.0 })
        .collect();
    Ok(Hamiltonian { onsite, hopping })
}

/// `S = P_odd - P_even` in 1-based site labels, i.e. `diag(+1, -1, ...)`.
pub fn chiral_operator(n_cells: usize) -> DMatrix<f64> {
    let n = 2 * n_cells;
    DMatrix::from_fn(n, n, |i, j| match (i == j, i % 2) {
        (true, 0) => 1.0,
        (true, _) => -1.0,
        _ => 0.0,
    })
}

/// Site reversal `|n> -> |2N + 1 - n>`.
pub fn inversion_operator(n_cells: usize) -> DMatrix<f64> {
    let n = 2 * n_cells;
    DMatrix::from_fn(n, n, |i, j| if i + j == n - 1 { 1.0 } else { 0.0 })
}

/// Largest absolute entry of `S H S + H`.
pub fn chiral_residual(h: &DMatrix<f64>) -> f64 {
    let s = chiral_operator(h.nrows() / 2);
    (&s * h * &s + h).amax()
}

/// Largest absolute entry of `I H I - H`.
pub fn inversion_residual(h: &DMatrix<f64>) -> f64 {
    let inv = inversion_operator(h.nrows() / 2);
    (&inv * h * &inv - h).amax()
}

/// Largest absolute entry of `H - H^dagger`.
pub fn hermiticity_residual(h: &DMatrix<Complex64>) -> f64 {
    crate::max_modulus(&(h - h.adjoint()))
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sigma_x() -> Matrix2<Complex64> {
    Matrix2::new(c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.))
}

pub fn sigma_y() -> Matrix2<Complex64> {
    Matrix2::new(c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.))
}

pub fn sigma_z() -> Matrix2<Complex64> {
    Matrix2::new(c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.))
}

/// Periodic-chain Bloch Hamiltonian `(v + w cos k) sx + (w sin k) sy`.
pub fn bloch_hamiltonian(k: f64, v: f64, w: f64) -> Matrix2<Complex64> {
    sigma_x() * c(v + w * k.cos(), 0.0) + sigma_y() * c(w * k.sin(), 0.0)
}

/// Maximum symmetry residuals of the Bloch form over a `k` grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BlochResiduals {
    /// `|sz H(k) sz + H(k)|`
    pub chiral: f64,
    /// `|H(k)* - H(-k)|`
    pub time_reversal: f64,
    /// `|sz H(k) sz + H*(-k)|`
    pub particle_hole: f64,
    /// `|sx H(k) sx - H(-k)|`
    pub inversion: f64,
}

pub fn bloch_symmetry_residuals(v: f64, w: f64, n_k: usize) -> BlochResiduals {
    let (sx, sz) = (sigma_x(), sigma_z());
    let mut out = BlochResiduals::default();
    for j in 0..n_k.max(1) {
        let k = if n_k > 1 {
            -PI + 2.0 * PI * j as f64 / (n_k - 1) as f64
        } else {
            0.0
        };
        let hk = bloch_hamiltonian(k, v, w);
        let hmk = bloch_hamiltonian(-k, v, w);
        out.chiral = out.chiral.max(crate::max_modulus(&(sz * hk * sz + hk)));
        out.time_reversal = out.time_reversal.max(crate::max_modulus(&(hk.conjugate() - hmk)));
        out.particle_hole = out.particle_hole.max(crate::max_modulus(&(sz * hk * sz + hmk.conjugate())));
        out.inversion = out.inversion.max(crate::max_modulus(&(sx * hk * sx - hmk)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> Schedule {
        Schedule::new(252.0).unwrap()
    }

    #[test]
    fn intracell_amplitude_follows_the_ramp() {
        let spec = LatticeSpec::default();
        let s = sched();
        assert_eq!(intracell_amplitude(0.0, &spec, &s).unwrap(), 0.0);
        assert!((intracell_amplitude(126.0, &spec, &s).unwrap() - 0.6).abs() < 1e-15);
        assert!(intracell_amplitude(252.0, &spec, &s).unwrap().abs() <= 1e-12);
        assert!(matches!(
            intracell_amplitude(253.0, &spec, &s),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(intracell_amplitude(-1.0, &spec, &s).is_err());
    }

    #[test]
    fn lattice_spec_rejects_bad_parameters() {
        assert!(LatticeSpec::new(1, 0.5).is_err());
        assert!(LatticeSpec::new(4, 1.0).is_err());
        assert!(LatticeSpec::new(4, -0.1).is_err());
        assert_eq!(LatticeSpec::new(4, 0.3).unwrap().n_sites(), 8);
        assert!(Schedule::with_steps(0.0, 10).is_err());
        assert_eq!(Schedule::new(504.0).unwrap().n_steps, 20160);
        assert_eq!(Schedule::new(10.0).unwrap().n_steps, 4096);
    }

    #[test]
    fn dimerized_limit_couples_only_inner_sites() {
        let spec = LatticeSpec::new(2, 0.6).unwrap();
        let h = build_hamiltonian(0.0, &spec, &sched(), None, &DisorderSpec::clean())
            .unwrap()
            .to_real_dense();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i, j) == (1, 2) || (i, j) == (2, 1) { 1.0 } else { 0.0 };
                assert_eq!(h[(i, j)], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn midpoint_intracell_bonds_reach_v0() {
        let spec = LatticeSpec::default();
        let h = build_hamiltonian(126.0, &spec, &sched(), None, &DisorderSpec::clean()).unwrap();
        for (b, t) in h.hopping.iter().enumerate() {
            let expected = if b % 2 == 0 { 0.6 } else { 1.0 };
            assert!((t - expected).abs() < 1e-15);
        }
        assert!(h.onsite.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn operators_are_involutions() {
        let s = chiral_operator(8);
        let inv = inversion_operator(8);
        let id = DMatrix::<f64>::identity(16, 16);
        assert_eq!(&s * &s, id);
        assert_eq!(&inv * &inv, id);
        let mut e1 = nalgebra::DVector::<f64>::zeros(16);
        e1[0] = 1.0;
        let image = &inv * e1;
        assert_eq!(image[15], 1.0);
        assert_eq!(image.sum(), 1.0);
    }

    #[test]
    fn clean_chain_is_chiral_and_inversion_symmetric() {
        let spec = LatticeSpec::default();
        let s = sched();
        for &t in &[0.0, 31.0, 126.0, 200.5, 252.0] {
            let h = build_hamiltonian(t, &spec, &s, None, &DisorderSpec::clean())
                .unwrap()
                .to_real_dense();
            assert!(inversion_residual(&h) <= 1e-12);
            assert!(chiral_residual(&h) <= 1e-12);
        }
    }

    #[test]
    fn hopping_disorder_keeps_chiral_symmetry() {
        let spec = LatticeSpec::default();
        let s = sched();
        let dspec = DisorderSpec::new(DisorderKind::HoppingBdi, 0.2, TemporalPolicy::Static, 11);
        let draw = sample_disorder(&dspec, 16, 0);
        let h = build_hamiltonian(100.0, &spec, &s, Some(&draw), &dspec).unwrap();
        assert!(h.onsite.iter().all(|&e| e == 0.0));
        assert!(chiral_residual(&h.to_real_dense()) <= 1e-12);
        assert!(inversion_residual(&h.to_real_dense()) > 1e-4);
        // the disordered intracell bonds still vanish with v(t)
        let h0 = build_hamiltonian(0.0, &spec, &s, Some(&draw), &dspec).unwrap();
        assert!(h0.hopping.iter().step_by(2).all(|&t| t == 0.0));
    }

    #[test]
    fn onsite_disorder_symmetry_properties() {
        let spec = LatticeSpec::default();
        let s = sched();
        let sym = DisorderSpec::new(
            DisorderKind::OnsiteInversionSymmetric,
            0.2,
            TemporalPolicy::Static,
            5,
        );
        let draw = sample_disorder(&sym, 16, 0);
        let h = build_hamiltonian(80.0, &spec, &s, Some(&draw), &sym).unwrap().to_real_dense();
        assert!(inversion_residual(&h) <= 1e-12);
        assert!(chiral_residual(&h) > 1e-4);

        let generic = DisorderSpec::new(DisorderKind::OnsiteGeneric, 0.2, TemporalPolicy::Static, 5);
        let draw = sample_disorder(&generic, 16, 0);
        let h = build_hamiltonian(80.0, &spec, &s, Some(&draw), &generic)
            .unwrap()
            .to_real_dense();
        assert!(inversion_residual(&h) > 1e-4);
        assert!(chiral_residual(&h) > 1e-4);
    }

    #[test]
    fn mismatched_draws_and_negative_strength_are_rejected() {
        let dspec = DisorderSpec::new(DisorderKind::HoppingBdi, 0.1, TemporalPolicy::Static, 1);
        let wrong = sample_disorder(
            &DisorderSpec { kind: DisorderKind::OnsiteGeneric, ..dspec },
            16,
            0,
        );
        assert!(matches!(
            hamiltonian_at(8, 0.3, Some(&wrong), &dspec),
            Err(Error::DrawLength { expected: 15, got: 16 })
        ));
        assert!(hamiltonian_at(8, 0.3, None, &dspec).is_err());
        let negative = dspec.with_strength(-0.1);
        let draw = sample_disorder(&negative, 16, 0);
        assert!(matches!(
            hamiltonian_at(8, 0.3, Some(&draw), &negative),
            Err(Error::InvalidParameter { name: "strength", .. })
        ));
    }

    #[test]
    fn static_draws_ignore_the_step() {
        let dspec = DisorderSpec::new(DisorderKind::OnsiteGeneric, 0.2, TemporalPolicy::Static, 9);
        assert_eq!(sample_disorder(&dspec, 16, 0), sample_disorder(&dspec, 16, 7));
        let temporal = DisorderSpec {
            policy: TemporalPolicy::ResampleEveryStep,
            ..dspec
        };
        assert_ne!(sample_disorder(&temporal, 16, 0), sample_disorder(&temporal, 16, 7));
        assert_eq!(sample_disorder(&temporal, 16, 7), sample_disorder(&temporal, 16, 7));
    }

    #[test]
    fn inversion_symmetric_draws_are_mirrored() {
        let dspec = DisorderSpec::new(
            DisorderKind::OnsiteInversionSymmetric,
            0.2,
            TemporalPolicy::ResampleEveryStep,
            3,
        );
        for step in 0..50 {
            let r = sample_disorder(&dspec, 16, step).r;
            for n in 0..16 {
                assert_eq!(r[n], r[15 - n]);
            }
        }
    }

    #[test]
    fn draws_stay_in_the_unit_interval() {
        let dspec = DisorderSpec::new(
            DisorderKind::HoppingBdi,
            0.2,
            TemporalPolicy::ResampleEveryStep,
            42,
        );
        let mut count = 0;
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for step in 0..(100_000 / 15 + 1) {
            for r in sample_disorder(&dspec, 16, step).r {
                lo = lo.min(r);
                hi = hi.max(r);
                count += 1;
            }
        }
        assert!(count >= 100_000);
        assert!(lo >= -0.5 && hi <= 0.5);
        assert!(lo < -0.49 && hi > 0.49);
    }

    #[test]
    fn refresh_interval_groups_steps() {
        let mut dspec =
            DisorderSpec::new(DisorderKind::OnsiteGeneric, 0.1, TemporalPolicy::ResampleEveryStep, 1);
        assert_eq!(dspec.draw_index(5, 0.1), 5);
        dspec.refresh_interval = Some(1.0);
        assert_eq!(dspec.draw_index(0, 0.1), 0);
        assert_eq!(dspec.draw_index(9, 0.1), 0);
        assert_eq!(dspec.draw_index(10, 0.1), 1);
        dspec.policy = TemporalPolicy::Static;
        assert_eq!(dspec.draw_index(100, 0.1), 0);
    }

    #[test]
    fn bloch_form_limits_and_symmetries() {
        let (v, w) = (0.6, 1.0);
        let h0 = bloch_hamiltonian(0.0, v, w);
        assert!(crate::max_modulus(&(h0 - sigma_x() * c(v + w, 0.0))) < 1e-15);
        let hpi = bloch_hamiltonian(PI, v, w);
        assert!(crate::max_modulus(&(hpi - sigma_x() * c(v - w, 0.0))) < 1e-15);
        let res = bloch_symmetry_residuals(v, w, 101);
        assert!(res.chiral <= 1e-12);
        assert!(res.time_reversal <= 1e-12);
        assert!(res.particle_hole <= 1e-12);
        assert!(res.inversion <= 1e-12);
    }

    #[test]
    fn realization_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> =
            (0..1000).map(|k| realization_seed(7, k)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(realization_seed(7, 3), realization_seed(7, 3));
        assert_ne!(realization_seed(7, 3), realization_seed(8, 3));
    }

    #[test]
    fn rate_only_moves_intracell_bonds() {
        let spec = LatticeSpec::default();
        let s = sched();
        let dspec = DisorderSpec::new(DisorderKind::OnsiteGeneric, 0.2, TemporalPolicy::Static, 2);
        let draw = sample_disorder(&dspec, 16, 0);
        let rate = hamiltonian_rate(10.0, &spec, &s, Some(&draw), &dspec).unwrap();
        assert!(rate.onsite.iter().all(|&e| e == 0.0));
        let eps = 1e-5;
        let hp = build_hamiltonian(10.0 + eps, &spec, &s, Some(&draw), &dspec).unwrap();
        let hm = build_hamiltonian(10.0 - eps, &spec, &s, Some(&draw), &dspec).unwrap();
        for b in 0..15 {
            let fd = (hp.hopping[b] - hm.hopping[b]) / (2.0 * eps);
            assert!((fd - rate.hopping[b]).abs() < 1e-9);
        }
    }
}
