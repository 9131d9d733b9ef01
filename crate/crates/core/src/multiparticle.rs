//! Two identical bosons on the chain.
//!
//! States live on the symmetric basis `{(i, j) : i <= j}` with
//! `(i, j) <-> b_i^dagger b_j^dagger |vac> / sqrt(1 + delta_ij)`, which is
//! orthonormal and coincides with the occupation-number basis. Without
//! interactions the two-boson output is fixed by the single-particle
//! propagator through 2x2 permanents; [`fock_evolve_oracle`] integrates the
//! same schedule directly in the symmetric Fock space as an independent
//! check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::{for_each_step, unitarity_error};
use crate::model::{DisorderSpec, Hamiltonian, LatticeSpec, Schedule};
use crate::{Error, Result, WaveFunction};

/// Largest symmetric-basis dimension the Fock integrator accepts.
pub const FOCK_DIMENSION_LIMIT: usize = 10_000;

const UNITARITY_TOL: f64 = 1e-8;
const MAX_TAYLOR_ORDER: usize = 60;

/// Position of `(i, j)`, `i <= j`, in the lexicographic symmetric basis.
pub fn pair_index(n_sites: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n_sites - i * (i + 1) / 2 + j
}

pub fn basis_dimension(n_sites: usize) -> usize {
    n_sites * (n_sites + 1) / 2
}

/// All `(i, j)` with `i <= j`, in basis order.
pub fn pairs(n_sites: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_sites).flat_map(move |i| (i..n_sites).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleState {
    pub n_sites: usize,
    pub amplitudes: DVector<Complex64>,
}

impl TwoParticleState {
    pub fn zeros(n_sites: usize) -> Self {
        TwoParticleState {
            n_sites,
            amplitudes: DVector::zeros(basis_dimension(n_sites)),
        }
    }

    /// `|i, j>`; `|i, i>` holds two bosons on site `i`.
    pub fn basis(n_sites: usize, i: usize, j: usize) -> Self {
        let mut s = Self::zeros(n_sites);
        s.amplitudes[pair_index(n_sites, i, j)] = Complex64::new(1.0, 0.0);
        s
    }

    /// `(|1,1> + |2N,2N>) / sqrt(2)`.
    pub fn noon(n_sites: usize) -> Self {
        let mut s = Self::zeros(n_sites);
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        s.amplitudes[pair_index(n_sites, 0, 0)] = a;
        s.amplitudes[pair_index(n_sites, n_sites - 1, n_sites - 1)] = a;
        s
    }

    pub fn amplitude(&self, i: usize, j: usize) -> Complex64 {
        self.amplitudes[pair_index(self.n_sites, i, j)]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn overlap(&self, other: &TwoParticleState) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `|<self|other>|`.
    pub fn fidelity(&self, other: &TwoParticleState) -> f64 {
        self.overlap(other).norm()
    }

    /// Occupation numbers of basis state `index`.
    pub fn occupations(&self, index: usize) -> Vec<u8> {
        let (i, j) = pairs(self.n_sites).nth(index).expect("basis index out of range");
        let mut n = vec![0u8; self.n_sites];
        n[i] += 1;
        n[j] += 1;
        n
    }
}

/// Output of two bosons injected at sites `a` and `b` (0-based) of the
/// propagator `u`.
pub fn hom_output(u: &DMatrix<Complex64>, a: usize, b: usize) -> Result<TwoParticleState> {
    let residual = unitarity_error(u);
    if residual > UNITARITY_TOL {
        return Err(Error::NotUnitary { residual });
    }
    Ok(from_columns(
        &u.column(a).into_owned(),
        &u.column(b).into_owned(),
        a == b,
    ))
}

/// Two-boson state from the images `U|a>` and `U|b>`:
/// `amp(q, r) = (U_qa U_rb + U_qb U_ra) / (sqrt(1 + d_ab) sqrt(1 + d_qr))`.
pub fn from_columns(col_a: &WaveFunction, col_b: &WaveFunction, same_site: bool) -> TwoParticleState {
    let n = col_a.len();
    let input = if same_site { 2f64.sqrt() } else { 1.0 };
    let mut out = TwoParticleState::zeros(n);
    for (idx, (q, r)) in pairs(n).enumerate() {
        let perm = col_a[q] * col_b[r] + col_b[q] * col_a[r];
        let output = if q == r { 2f64.sqrt() } else { 1.0 };
        out.amplitudes[idx] = perm / (input * output);
    }
    out
}

/// Scratch grids for the two-boson generator.
struct Grid {
    n: usize,
    full: Vec<Complex64>,
    image: Vec<Complex64>,
}

impl Grid {
    fn new(n: usize) -> Self {
        Grid {
            n,
            full: vec![Complex64::default(); n * n],
            image: vec![Complex64::default(); n * n],
        }
    }

    /// `out = (H (x) 1 + 1 (x) H) x` on the symmetric subspace. The
    /// amplitudes are lifted to a symmetric `n x n` grid `f`, for which the
    /// generator acts as `H f + f H = G + G^T` with `G = H f`; projecting back
    /// onto `|i, j>`, `i < j`, picks up `sqrt(2)` from the two grid entries.
    fn apply(&mut self, h: &Hamiltonian, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (idx, (i, j)) in pairs(n).enumerate() {
            if i == j {
                self.full[i * n + i] = x[idx];
            } else {
                self.full[i * n + j] = x[idx] * s;
                self.full[j * n + i] = x[idx] * s;
            }
        }
        for (f, g) in self.full.chunks_exact(n).zip(self.image.chunks_exact_mut(n)) {
            h.apply(f, g);
        }
        for (idx, (i, j)) in pairs(n).enumerate() {
            out[idx] = if i == j {
                self.image[i * n + i] * 2.0
            } else {
                (self.image[i * n + j] + self.image[j * n + i]) * std::f64::consts::SQRT_2
            };
        }
    }
}

/// `state <- exp(-i H_2 dt) state` with `H_2` the two-boson generator of
/// the single-particle `h`.
pub fn two_boson_step(h: &Hamiltonian, dt: f64, state: &mut TwoParticleState) {
    let mut grid = Grid::new(h.n_sites());
    two_boson_step_with(&mut grid, h, dt, state);
}

fn two_boson_step_with(grid: &mut Grid, h: &Hamiltonian, dt: f64, state: &mut TwoParticleState) {
    let dim = state.amplitudes.len();
    let mut term = vec![Complex64::default(); dim];
    let mut next = vec![Complex64::default(); dim];
    let substeps = (2.0 * h.norm_bound() * dt.abs() / 0.5).ceil().max(1.0) as usize;
    let tau = dt / substeps as f64;
    let acc = state.amplitudes.as_mut_slice();
    for _ in 0..substeps {
        term.copy_from_slice(acc);
        for k in 1..=MAX_TAYLOR_ORDER {
            grid.apply(h, &term, &mut next);
            let factor = Complex64::new(0.0, -tau / k as f64);
            let mut size = 0.0f64;
            for ((t, nx), a) in term.iter_mut().zip(&next).zip(acc.iter_mut()) {
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

/// Integrates `initial` through the schedule in the symmetric two-boson
/// space, using the same step factors and disorder draws as the
/// single-particle propagator.
pub fn fock_evolve_oracle(
    spec: &LatticeSpec,
    sched: &Schedule,
    dspec: &DisorderSpec,
    initial: &TwoParticleState,
) -> Result<TwoParticleState> {
    let dim = basis_dimension(spec.n_sites());
    if dim > FOCK_DIMENSION_LIMIT {
        return Err(Error::DimensionOverflow {
            dimension: dim,
            limit: FOCK_DIMENSION_LIMIT,
        });
    }
    if initial.n_sites != spec.n_sites() {
        return Err(Error::invalid("initial", "site count does not match the lattice"));
    }
    let dt = sched.dt();
    let mut state = initial.clone();
    let mut grid = Grid::new(spec.n_sites());
    for_each_step(spec, sched, dspec, |_, factors, _| {
        for g in factors {
            two_boson_step_with(&mut grid, g, dt, &mut state);
        }
        Ok(())
    })?;
    Ok(state)
}

/// `<n_r>` for every site; sums to 2.
pub fn density(state: &TwoParticleState) -> Vec<f64> {
    let mut n = vec![0.0; state.n_sites];
    for (idx, (i, j)) in pairs(state.n_sites).enumerate() {
        let p = state.amplitudes[idx].norm_sqr();
        n[i] += p;
        n[j] += p;
    }
    n
}

/// `Gamma_qr = <b_q^dagger b_r^dagger b_r b_q>`.
pub fn correlation(state: &TwoParticleState) -> DMatrix<f64> {
    let n = state.n_sites;
    let mut gamma = DMatrix::zeros(n, n);
    for (idx, (i, j)) in pairs(n).enumerate() {
        let p = state.amplitudes[idx].norm_sqr();
        if i == j {
            gamma[(i, i)] = 2.0 * p;
        } else {
            gamma[(i, j)] = p;
            gamma[(j, i)] = p;
        }
    }
    gamma
}

/// `sum_{q,r} Gamma_qq Gamma_rr - Gamma_qr^2`.
///
/// Lies in `[-2, 2]` when the bosons occupy only the two end sites; states
/// that bunch over many sites reach up to `4 - 4 / n_sites`.
pub fn noonity(gamma: &DMatrix<f64>) -> f64 {
    let trace = gamma.trace();
    trace * trace - gamma.iter().map(|g| g * g).sum::<f64>()
}

/// `|<NOON|psi>|` with the fixed NOON state `(|1,1> + |2N,2N>) / sqrt(2)`.
pub fn noon_fidelity(state: &TwoParticleState) -> f64 {
    TwoParticleState::noon(state.n_sites).fidelity(state)
}

/// `max_chi |<(|1,1> + e^{i chi}|2N,2N>)/sqrt(2) | psi>|`, which ignores the
/// relative phase of the two bunching terms.
pub fn noon_fidelity_phase_optimized(state: &TwoParticleState) -> f64 {
    let last = state.n_sites - 1;
    (state.amplitude(0, 0).norm() + state.amplitude(last, last).norm()) / 2f64.sqrt()
}
