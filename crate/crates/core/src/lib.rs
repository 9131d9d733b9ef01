//! Adiabatic manipulation of the hybridized edge states of a finite
//! Su-Schrieffer-Heeger chain.
//!
//! Slowly ramping the intracell hopping `v(t) = v0 sin(pi t / T)` away from
//! the fully dimerized limit and back turns the two end sites of the chain
//! into the ports of a beam splitter whose ratio is set by the dynamical
//! phase accumulated by the in-gap pair. Two identical bosons injected at
//! both ends interfere like in a Hong-Ou-Mandel experiment and leave as a
//! two-site NOON state when the splitter is balanced.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: lattice, schedule, disorder realizations and Hamiltonians.
//! * [`spectral`]: exact diagonalization, edge-state formulas, symmetry
//!   diagnostics.
//! * [`dynamics`]: stepped unitary propagation, dynamical phase, beam
//!   splitter scans, parity tracking.
//! * [`multiparticle`]: two-boson states, permanents, the symmetric Fock
//!   space integrator and correlation observables.
//! * [`ensemble`]: seeded disorder averages and symmetry-regime studies.
//! * [`export`]: CSV writers shared by the CLI and the browser demo.
//!
//! Units: `hbar = 1` and the intercell hopping `w = 1`; times are in `1/w`.
//! Site indices are 0-based in the API and 1-based in exported tables.

pub mod dynamics;
pub mod ensemble;
mod error;
pub mod export;
pub mod model;
pub mod multiparticle;
pub mod spectral;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Complex amplitudes on the `2N` sites of the chain.
pub type WaveFunction = nalgebra::DVector<Complex64>;

/// Largest entry modulus of a complex matrix.
pub(crate) fn max_modulus<'a, I>(entries: I) -> f64
where
    I: IntoIterator<Item = &'a Complex64>,
{
    entries.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}
