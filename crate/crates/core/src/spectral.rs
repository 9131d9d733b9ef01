//! Exact diagonalization, analytic edge states and symmetry diagnostics.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::model::{self, Hamiltonian, LatticeSpec, INTERCELL_HOPPING};
use crate::{Error, Result, WaveFunction};

/// In-gap energies closer than this are treated as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;
/// Minimum separation between the in-gap pair and the nearest bulk level.
const GAP_THRESHOLD: f64 = 1e-6;

/// Full spectrum with eigenvectors stored as columns, ascending in energy.
///
/// Each eigenvector's phase is fixed by making its largest-magnitude
/// component (first one on ties) real and positive.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub states: DMatrix<Complex64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn state(&self, n: usize) -> WaveFunction {
        self.states.column(n).into_owned()
    }

    /// `max_n |H psi_n - E_n psi_n|`.
    pub fn residual(&self, h: &DMatrix<Complex64>) -> f64 {
        (0..self.dim())
            .map(|n| {
                let psi = self.states.column(n);
                (h * psi - psi * Complex64::from(self.energies[n])).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |V^dagger V - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        crate::max_modulus(&(self.states.adjoint() * &self.states - DMatrix::identity(n, n)))
    }

    /// `max_k |E_k + E_{2N+1-k}|`, zero for a chiral-symmetric spectrum.
    pub fn pairing_error(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|k| (self.energies[k] + self.energies[n - 1 - k]).abs())
            .fold(0.0, f64::max)
    }
}

/// Diagonalizes a model Hamiltonian. Always Hermitian, so this cannot fail.
pub fn diagonalize(h: &Hamiltonian) -> EigenSystem {
    let eig = SymmetricEigen::new(h.to_real_dense());
    let states = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    sorted_system(eig.eigenvalues.as_slice(), states)
}

/// Diagonalizes an arbitrary complex matrix, rejecting non-Hermitian input.
pub fn diagonalize_matrix(m: &DMatrix<Complex64>) -> Result<EigenSystem> {
    if !m.is_square() {
        return Err(Error::NotHermitian {
            residual: f64::INFINITY,
        });
    }
    let residual = model::hermiticity_residual(m);
    if residual > 1e-12 * crate::max_modulus(m).max(1.0) {
        return Err(Error::NotHermitian { residual });
    }
    let eig = SymmetricEigen::new(m.clone());
    Ok(sorted_system(eig.eigenvalues.as_slice(), eig.eigenvectors))
}

fn sorted_system(energies: &[f64], vectors: DMatrix<Complex64>) -> EigenSystem {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let mut states = DMatrix::zeros(vectors.nrows(), vectors.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).into_owned();
        fix_phase_by_largest(&mut col);
        states.set_column(dst, &col);
    }
    EigenSystem {
        energies: order.iter().map(|&i| energies[i]).collect(),
        states,
    }
}

fn fix_phase_by_largest(psi: &mut WaveFunction) {
    let max = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = psi
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let phase = psi[pivot].conj() / psi[pivot].norm();
    *psi *= phase;
}

fn align_phase_to(psi: &mut WaveFunction, reference: &WaveFunction) {
    let overlap = reference.dotc(psi);
    if overlap.norm() > 0.0 {
        *psi *= overlap.conj() / overlap.norm();
    }
}

/// The hybridized in-gap pair `|0+>`, `|0->`.
///
/// `plus` is the upper state of the pair. When the two energies are
/// degenerate (the fully dimerized limit) the pair is rotated onto
/// inversion eigenstates and `plus` carries parity `(-1)^(N+1)`.
#[derive(Debug, Clone)]
pub struct EdgePair {
    pub plus: WaveFunction,
    pub minus: WaveFunction,
    pub e_plus: f64,
    pub e_minus: f64,
    /// Distance from the pair to the nearest bulk level.
    pub separation: f64,
}

impl EdgePair {
    /// Population of `psi` inside the in-gap subspace.
    pub fn population(&self, psi: &WaveFunction) -> f64 {
        self.plus.dotc(psi).norm_sqr() + self.minus.dotc(psi).norm_sqr()
    }
}

/// Picks the two smallest-|E| eigenpairs of `es`.
///
/// With `previous`, each state's phase is chosen so its overlap with the
/// previous one is real and positive; otherwise the largest component is
/// made real and positive. `t` only labels diagnostics.
pub fn in_gap_pair(es: &EigenSystem, previous: Option<&EdgePair>, t: f64) -> Result<EdgePair> {
    let n = es.dim();
    if n < 3 {
        return Err(Error::invalid("dimension", "need at least three levels"));
    }
    let mut by_abs: Vec<usize> = (0..n).collect();
    by_abs.sort_by(|&a, &b| es.energies[a].abs().total_cmp(&es.energies[b].abs()));
    let (i, j) = (by_abs[0], by_abs[1]);
    let (lo, hi) = if es.energies[i] <= es.energies[j] { (i, j) } else { (j, i) };
    let bulk = es.energies[by_abs[2]].abs();
    let inner = es.energies[lo].abs().max(es.energies[hi].abs());
    let separation = bulk - inner;
    if separation < GAP_THRESHOLD {
        return Err(Error::GapCollapse { t, separation });
    }

    let mut plus = es.state(hi);
    let mut minus = es.state(lo);
    if (es.energies[hi] - es.energies[lo]).abs() < DEGENERACY_TOL {
        (plus, minus) = parity_resolved(&plus, &minus);
    }
    match previous {
        Some(prev) => {
            align_phase_to(&mut plus, &prev.plus);
            align_phase_to(&mut minus, &prev.minus);
        }
        None => {
            fix_phase_by_largest(&mut plus);
            fix_phase_by_largest(&mut minus);
        }
    }
    Ok(EdgePair {
        plus,
        minus,
        e_plus: es.energies[hi],
        e_minus: es.energies[lo],
        separation,
    })
}

/// Rotates a degenerate pair onto inversion eigenstates; the first returned
/// state has parity `(-1)^(N+1)`.
fn parity_resolved(a: &WaveFunction, b: &WaveFunction) -> (WaveFunction, WaveFunction) {
    let n_sites = a.len();
    let n_cells = n_sites / 2;
    let ia = invert(a);
    let ib = invert(b);
    let m = Matrix2::new(a.dotc(&ia), a.dotc(&ib), b.dotc(&ia), b.dotc(&ib));
    let eig = SymmetricEigen::new(m);
    let wanted = if n_cells % 2 == 1 { 1.0 } else { -1.0 };
    let (k_plus, k_minus) = if (eig.eigenvalues[0] - wanted).abs() < (eig.eigenvalues[1] - wanted).abs()
    {
        (0, 1)
    } else {
        (1, 0)
    };
    let combine = |k: usize| {
        let col = eig.eigenvectors.column(k);
        a * col[0] + b * col[1]
    };
    (combine(k_plus), combine(k_minus))
}

/// Instantaneous spectrum sampled at `n_samples` evenly spaced times.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumCurves {
    pub times: Vec<f64>,
    /// `energies[k]` is the ascending spectrum at `times[k]`.
    pub energies: Vec<Vec<f64>>,
}

/// Spectrum of `H(t)` over `[0, t_final]`; disorder uses its first draw.
pub fn spectrum_curves(
    spec: &LatticeSpec,
    t_final: f64,
    n_samples: usize,
    dspec: &model::DisorderSpec,
) -> Result<SpectrumCurves> {
    if n_samples < 2 {
        return Err(Error::invalid("n_samples", "need at least two samples"));
    }
    let sched = model::Schedule::new(t_final)?;
    let draw = (dspec.kind != model::DisorderKind::None)
        .then(|| model::sample_disorder(dspec, spec.n_sites(), 0));
    let mut out = SpectrumCurves {
        times: Vec::with_capacity(n_samples),
        energies: Vec::with_capacity(n_samples),
    };
    for k in 0..n_samples {
        let t = t_final * k as f64 / (n_samples - 1) as f64;
        let h = model::build_hamiltonian(t, spec, &sched, draw.as_ref(), dspec)?;
        out.times.push(t);
        out.energies.push(diagonalize(&h).energies);
    }
    Ok(out)
}

/// `I psi`.
pub fn invert(psi: &WaveFunction) -> WaveFunction {
    let n = psi.len();
    DVector::from_fn(n, |i, _| psi[n - 1 - i])
}

/// `<psi| I |psi>`.
pub fn parity(psi: &WaveFunction) -> f64 {
    psi.dotc(&invert(psi)).re
}

/// Normalized ideal edge states of the semi-infinite chain.
#[derive(Debug, Clone)]
pub struct AnalyticEdgeStates {
    pub left: WaveFunction,
    pub right: WaveFunction,
    /// Localization factor `-v / w`.
    pub eta: f64,
}

/// `|L> = |1> + eta|3> + ...` on odd sites and its mirror `|R>` on even
/// sites, each normalized by `sqrt((1 - eta^2) / (1 - eta^(2N)))`.
pub fn analytic_edge_states(spec: &LatticeSpec, v: f64) -> Result<AnalyticEdgeStates> {
    let w = INTERCELL_HOPPING;
    if v.abs() >= w {
        return Err(Error::invalid("v", format!("|v| = {} >= w: edge states delocalize", v.abs())));
    }
    let n = spec.n_cells;
    let n_sites = spec.n_sites();
    let eta = -v / w;
    let norm = ((1.0 - eta * eta) / (1.0 - eta.powi(2 * n as i32))).sqrt();
    let mut left = WaveFunction::zeros(n_sites);
    let mut right = WaveFunction::zeros(n_sites);
    for m in 0..n {
        let amp = Complex64::from(norm * eta.powi(m as i32));
        left[2 * m] = amp;
        right[n_sites - 1 - 2 * m] = amp;
    }
    Ok(AnalyticEdgeStates { left, right, eta })
}

/// Closed-form splitting `E+ = |v eta^(N-1) (eta^2 - 1) / (eta^(2N) - 1)|`.
pub fn hybrid_energy_formula(spec: &LatticeSpec, v: f64) -> f64 {
    let n = spec.n_cells as i32;
    let eta = -v / INTERCELL_HOPPING;
    let denom = eta.powi(2 * n) - 1.0;
    if denom == 0.0 {
        return f64::NAN;
    }
    (v * eta.powi(n - 1) * (eta * eta - 1.0) / denom).abs()
}

/// Left-half minus right-half probability weight.
pub fn distribution_difference(psi: &WaveFunction) -> f64 {
    let half = psi.len() / 2;
    let left: f64 = psi.iter().take(half).map(|z| z.norm_sqr()).sum();
    let right: f64 = psi.iter().skip(half).map(|z| z.norm_sqr()).sum();
    left - right
}

/// Sublattice imbalance `<P_odd> - <P_even>` (1-based odd sites).
pub fn sublattice_imbalance(psi: &WaveFunction) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(i, z)| if i % 2 == 0 { z.norm_sqr() } else { -z.norm_sqr() })
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct EqualSupportViolation {
    pub index: usize,
    pub energy: f64,
    pub imbalance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EqualSupportReport {
    pub checked: usize,
    pub max_imbalance: f64,
    pub violations: Vec<EqualSupportViolation>,
}

impl EqualSupportReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every state with `|E| > energy_threshold` has equal weight
/// on odd and even sites (to 1e-10).
pub fn equal_support_check(es: &EigenSystem, energy_threshold: f64) -> EqualSupportReport {
    let mut report = EqualSupportReport {
        checked: 0,
        max_imbalance: 0.0,
        violations: Vec::new(),
    };
    for (n, &e) in es.energies.iter().enumerate() {
        if e.abs() <= energy_threshold {
            continue;
        }
        report.checked += 1;
        let imbalance = sublattice_imbalance(&es.state(n));
        report.max_imbalance = report.max_imbalance.max(imbalance.abs());
        if imbalance.abs() > 1e-10 {
            report.violations.push(EqualSupportViolation {
                index: n,
                energy: e,
                imbalance,
            });
        }
    }
    report
}

/// `<psi_n| dH/dt S |psi_n>`, the coupling between `psi_n` and its chiral
/// partner `S psi_n`.
pub fn transition_element(es: &EigenSystem, dh_dt: &DMatrix<Complex64>, n: usize) -> Complex64 {
    let psi = es.states.column(n);
    let s_psi = chiral_apply(&psi.into_owned());
    psi.dotc(&(dh_dt * s_psi))
}

/// `|H S psi_n + E_n S psi_n|`: zero exactly when `S psi_n` is an
/// eigenstate at `-E_n`.
pub fn chiral_partner_residual(es: &EigenSystem, h: &DMatrix<Complex64>, n: usize) -> f64 {
    let s_psi = chiral_apply(&es.state(n));
    (h * &s_psi + &s_psi * Complex64::from(es.energies[n])).norm()
}

fn chiral_apply(psi: &WaveFunction) -> WaveFunction {
    DVector::from_fn(psi.len(), |i, _| if i % 2 == 0 { psi[i] } else { -psi[i] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_hamiltonian, hamiltonian_at, hamiltonian_rate, sample_disorder, DisorderKind,
        DisorderSpec, Schedule, TemporalPolicy,
    };

    fn clean(n_cells: usize, v: f64) -> Hamiltonian {
        hamiltonian_at(n_cells, v, None, &DisorderSpec::clean()).unwrap()
    }

    fn disordered(kind: DisorderKind, strength: f64, seed: u64, v: f64) -> Hamiltonian {
        let dspec = DisorderSpec::new(kind, strength, TemporalPolicy::Static, seed);
        let draw = sample_disorder(&dspec, 16, 0);
        hamiltonian_at(8, v, Some(&draw), &dspec).unwrap()
    }

    #[test]
    fn clean_spectrum_is_paired_and_accurate() {
        let h = clean(8, 0.6);
        let es = diagonalize(&h);
        assert!(es.pairing_error() <= 1e-10);
        assert!(es.residual(&h.to_dense()) <= 1e-10);
        assert!(es.orthonormality_error() <= 1e-10);
        assert!(es.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dimerized_spectrum() {
        let es = diagonalize(&clean(8, 0.0));
        let expected: Vec<f64> = std::iter::repeat(-1.0)
            .take(7)
            .chain([0.0, 0.0])
            .chain(std::iter::repeat(1.0).take(7))
            .collect();
        for (e, x) in es.energies.iter().zip(expected) {
            assert!((e - x).abs() < 1e-12, "{e} vs {x}");
        }
    }

    #[test]
    fn hopping_disorder_keeps_pairing() {
        for seed in 0..5 {
            let es = diagonalize(&disordered(DisorderKind::HoppingBdi, 0.2, seed, 0.45));
            assert!(es.pairing_error() <= 1e-10);
        }
    }

    #[test]
    fn diagonalize_matrix_rejects_non_hermitian() {
        let mut m = clean(4, 0.3).to_dense();
        m[(0, 1)] += Complex64::new(0.0, 0.1);
        assert!(matches!(diagonalize_matrix(&m), Err(Error::NotHermitian { .. })));
        let es = diagonalize_matrix(&clean(4, 0.3).to_dense()).unwrap();
        assert!(es.pairing_error() < 1e-10);
    }

    #[test]
    fn diagonalize_matrix_handles_complex_hermitian() {
        let mut m = clean(3, 0.4).to_dense();
        m[(0, 1)] = Complex64::new(0.0, 0.4);
        m[(1, 0)] = Complex64::new(0.0, -0.4);
        let es = diagonalize_matrix(&m).unwrap();
        assert!(es.residual(&m) < 1e-10);
        assert!(es.orthonormality_error() < 1e-10);
    }

    #[test]
    fn dimerized_pair_is_parity_resolved() {
        let es = diagonalize(&clean(8, 0.0));
        let pair = in_gap_pair(&es, None, 0.0).unwrap();
        assert_eq!(pair.e_plus.abs(), 0.0);
        assert_eq!(pair.e_minus.abs(), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // N = 8: plus carries parity -1
        assert!((pair.plus[0].re - s).abs() < 1e-12);
        assert!((pair.plus[15].re + s).abs() < 1e-12);
        assert!((pair.minus[0].re - s).abs() < 1e-12);
        assert!((pair.minus[15].re - s).abs() < 1e-12);
        assert!((parity(&pair.plus) + 1.0).abs() < 1e-12);
        assert!((parity(&pair.minus) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_parities_follow_cell_count() {
        for n_cells in 2..=7 {
            let es = diagonalize(&clean(n_cells, 0.5));
            let pair = in_gap_pair(&es, None, 0.0).unwrap();
            let sign = if n_cells % 2 == 1 { 1.0 } else { -1.0 };
            assert!((parity(&pair.plus) - sign).abs() < 1e-10, "N = {n_cells}");
            assert!((parity(&pair.minus) + sign).abs() < 1e-10, "N = {n_cells}");
            assert!(pair.e_plus > 0.0);
        }
    }

    #[test]
    fn midpoint_pair_matches_formula() {
        let spec = LatticeSpec::default();
        let pair = in_gap_pair(&diagonalize(&clean(8, 0.6)), None, 0.0).unwrap();
        let formula = hybrid_energy_formula(&spec, 0.6);
        assert!(((pair.e_plus - formula) / pair.e_plus).abs() < 0.01);
        assert!((pair.e_plus + pair.e_minus).abs() < 1e-10);
        assert!(pair.separation > 0.3);
        // odd-site and even-site parts of the hybrid states
        let st = analytic_edge_states(&spec, 0.6).unwrap();
        let odd_weight: f64 = (0..16).step_by(2).map(|i| pair.plus[i].norm_sqr()).sum();
        assert!((odd_weight - 0.5).abs() < 1e-10);
        assert!(st.left.iter().skip(1).step_by(2).all(|z| *z == Complex64::from(0.0)));
    }

    #[test]
    fn formula_arithmetic() {
        let spec = LatticeSpec::default();
        assert_eq!(hybrid_energy_formula(&spec, 0.0), 0.0);
        // 0.6 * 0.6^7 * 0.64 / (1 - 0.6^16), written out by hand
        let p7 = 0.6f64 * 0.6 * 0.6 * 0.6 * 0.6 * 0.6 * 0.6;
        let p16 = p7 * p7 * 0.6 * 0.6;
        let by_hand = 0.6 * p7 * 0.64 / (1.0 - p16);
        assert!((hybrid_energy_formula(&spec, 0.6) - by_hand).abs() < 1e-15);
        assert!((by_hand - 0.01078).abs() < 5e-5);
    }

    #[test]
    fn formula_error_shrinks_with_chain_length() {
        let v = 0.6;
        let mut last = f64::INFINITY;
        for n_cells in 3..=10 {
            let spec = LatticeSpec::new(n_cells, v).unwrap();
            let pair = in_gap_pair(&diagonalize(&clean(n_cells, v)), None, 0.0).unwrap();
            let err = ((hybrid_energy_formula(&spec, v) - pair.e_plus) / pair.e_plus).abs();
            assert!(err < last, "N = {n_cells}: {err} !< {last}");
            last = err;
        }
        let spec = LatticeSpec::default();
        let pair = in_gap_pair(&diagonalize(&clean(8, 0.3)), None, 0.0).unwrap();
        let err = ((hybrid_energy_formula(&spec, 0.3) - pair.e_plus) / pair.e_plus).abs();
        assert!(err < 1e-3);
    }

    #[test]
    fn analytic_states() {
        let spec = LatticeSpec::default();
        let dimer = analytic_edge_states(&spec, 0.0).unwrap();
        assert_eq!(dimer.left[0], Complex64::from(1.0));
        assert_eq!(dimer.right[15], Complex64::from(1.0));
        assert!((dimer.left.norm() - 1.0).abs() < 1e-15);

        let st = analytic_edge_states(&spec, 0.6).unwrap();
        assert!((st.left[2].re / st.left[0].re + 0.6).abs() < 1e-14);
        assert!((st.right[13].re / st.right[15].re + 0.6).abs() < 1e-14);
        assert!((st.left.norm() - 1.0).abs() < 1e-14);
        assert!((st.right.norm() - 1.0).abs() < 1e-14);
        assert!(analytic_edge_states(&spec, 1.0).is_err());
    }

    #[test]
    fn analytic_left_state_matches_diagonalization() {
        let spec = LatticeSpec::default();
        let pair = in_gap_pair(&diagonalize(&clean(8, 0.3)), None, 0.0).unwrap();
        let st = analytic_edge_states(&spec, 0.3).unwrap();
        let combo = (&pair.plus + &pair.minus) / Complex64::from(2f64.sqrt());
        let alt = (&pair.plus - &pair.minus) / Complex64::from(2f64.sqrt());
        let overlap = st.left.dotc(&combo).norm().max(st.left.dotc(&alt).norm());
        assert!(overlap >= 0.999, "{overlap}");
    }

    #[test]
    fn distribution_difference_limits() {
        let mut psi = WaveFunction::zeros(16);
        psi[0] = Complex64::from(1.0);
        assert_eq!(distribution_difference(&psi), 1.0);
        psi[0] = Complex64::from(0.0);
        psi[15] = Complex64::from(1.0);
        assert_eq!(distribution_difference(&psi), -1.0);
    }

    #[test]
    fn inversion_symmetric_eigenstates_are_balanced() {
        let spec = LatticeSpec::default();
        let sched = Schedule::new(252.0).unwrap();
        for &t in &[0.0, 40.0, 126.0, 252.0] {
            let h = build_hamiltonian(t, &spec, &sched, None, &DisorderSpec::clean()).unwrap();
            let pair = in_gap_pair(&diagonalize(&h), None, t).unwrap();
            assert!(distribution_difference(&pair.plus).abs() <= 1e-10);
            assert!(distribution_difference(&pair.minus).abs() <= 1e-10);
        }
        let h = disordered(DisorderKind::OnsiteInversionSymmetric, 0.2, 4, 0.5);
        let es = diagonalize(&h);
        for n in 0..16 {
            assert!(distribution_difference(&es.state(n)).abs() <= 1e-10);
        }
    }

    #[test]
    fn equal_support_by_symmetry_class() {
        let es = diagonalize(&clean(8, 0.6));
        let report = equal_support_check(&es, 1e-6);
        assert_eq!(report.checked, 16);
        assert!(report.passed());
        // the 14 bulk states alone
        let report = equal_support_check(&es, 0.1);
        assert_eq!(report.checked, 14);
        assert!(report.passed());

        let es = diagonalize(&disordered(DisorderKind::HoppingBdi, 0.2, 3, 0.6));
        assert!(equal_support_check(&es, 1e-6).passed());

        let es = diagonalize(&disordered(DisorderKind::OnsiteGeneric, 0.2, 3, 0.6));
        let report = equal_support_check(&es, 1e-6);
        assert!(!report.passed());
        assert!(report.max_imbalance > 1e-4);
    }

    #[test]
    fn transition_elements_vanish_with_real_chiral_rates() {
        let spec = LatticeSpec::default();
        let sched = Schedule::new(252.0).unwrap();
        let t = 77.0;
        let check = |dspec: DisorderSpec| {
            let draw = sample_disorder(&dspec, 16, 0);
            let draw = (dspec.kind != DisorderKind::None).then_some(&draw);
            let h = build_hamiltonian(t, &spec, &sched, draw, &dspec).unwrap();
            let rate = hamiltonian_rate(t, &spec, &sched, draw, &dspec).unwrap().to_dense();
            let es = diagonalize(&h);
            let pair = in_gap_pair(&es, None, t).unwrap();
            let max = (0..16)
                .map(|n| transition_element(&es, &rate, n).norm())
                .fold(0.0, f64::max);
            (max, es, h, pair)
        };
        let (max, _, _, _) = check(DisorderSpec::clean());
        assert!(max <= 1e-12);
        let bdi = DisorderSpec::new(DisorderKind::HoppingBdi, 0.2, TemporalPolicy::Static, 8);
        let (max, es, h, _) = check(bdi);
        assert!(max <= 1e-12);
        assert!(chiral_partner_residual(&es, &h.to_dense(), 7) < 1e-10);

        // on-site disorder: S psi_n stops being an eigenstate
        let generic = DisorderSpec::new(DisorderKind::OnsiteGeneric, 0.2, TemporalPolicy::Static, 8);
        let (_, es, h, _) = check(generic);
        assert!(chiral_partner_residual(&es, &h.to_dense(), 7) > 1e-3);
    }

    #[test]
    fn complex_chiral_rate_couples_partners() {
        // imaginary hopping rate: anticommutes with S but breaks time reversal
        let h = clean(4, 0.5);
        let es = diagonalize(&h);
        let mut rate = DMatrix::<Complex64>::zeros(8, 8);
        for b in 0..7 {
            rate[(b, b + 1)] = Complex64::new(0.0, 0.3);
            rate[(b + 1, b)] = Complex64::new(0.0, -0.3);
        }
        let max = (0..8)
            .map(|n| transition_element(&es, &rate, n).norm())
            .fold(0.0, f64::max);
        assert!(max > 1e-3);
    }

    #[test]
    fn gauge_follows_previous_pair() {
        let a = in_gap_pair(&diagonalize(&clean(8, 0.4)), None, 0.0).unwrap();
        let mut flipped = a.clone();
        flipped.plus *= Complex64::new(-1.0, 0.0);
        let b = in_gap_pair(&diagonalize(&clean(8, 0.41)), Some(&flipped), 0.0).unwrap();
        assert!(flipped.plus.dotc(&b.plus).re > 0.99);
        assert!(a.minus.dotc(&b.minus).re > 0.99);
    }

    #[test]
    fn spectrum_curves_peak_mid_ramp() {
        let spec = LatticeSpec::default();
        let curves = spectrum_curves(&spec, 100.0, 101, &model::DisorderSpec::clean()).unwrap();
        assert_eq!(curves.energies.len(), 101);
        let mid = &curves.energies[50];
        assert!((mid[8] - 0.01075).abs() < 5e-5, "{}", mid[8]);
        assert!((mid[8] + mid[7]).abs() < 1e-12);
        // dimerized ends: bands at -1, 0, +1
        for e in &curves.energies[0] {
            assert!([-1.0, 0.0, 1.0].iter().any(|b| (e - b).abs() < 1e-12));
        }
        assert!(spectrum_curves(&spec, 100.0, 1, &model::DisorderSpec::clean()).is_err());
    }
}
