//! Browser bindings. Every export returns a JSON string for `JSON.parse`.

use nalgebra::DMatrix;
use serde::Serialize;
use ssh_hom::dynamics::{beam_splitter_scan, evolve_with};
use ssh_hom::ensemble::ensemble_schedule;
use ssh_hom::model::{DisorderKind, DisorderSpec, LatticeSpec, TemporalPolicy};
use ssh_hom::multiparticle::{correlation, from_columns, noon_fidelity, noonity};
use ssh_hom::spectral::spectrum_curves;
use ssh_hom::Complex64;
use wasm_bindgen::prelude::*;

type JsResult = Result<String, JsError>;

fn lattice(n_cells: usize, v0: f64) -> Result<LatticeSpec, JsError> {
    Ok(LatticeSpec::new(n_cells, v0)?)
}

fn json<T: Serialize>(value: &T) -> JsResult {
    Ok(serde_json::to_string(value)?)
}

/// `{times, energies}` with `energies[k]` ascending at `times[k]`.
#[wasm_bindgen]
pub fn spectrum(n_cells: usize, v0: f64, t_final: f64, samples: usize) -> JsResult {
    let spec = lattice(n_cells, v0)?;
    json(&spectrum_curves(&spec, t_final, samples, &DisorderSpec::clean())?)
}

/// Clean beam-splitter rows for `n_phases` phases evenly spread over
/// `[phi_min, phi_max]`.
#[wasm_bindgen]
pub fn bs_scan(n_cells: usize, v0: f64, phi_min: f64, phi_max: f64, n_phases: usize) -> JsResult {
    let spec = lattice(n_cells, v0)?;
    if n_phases < 2 || !(phi_min > 0.0 && phi_max > phi_min) {
        return Err(JsError::new("need n_phases >= 2 and 0 < phi_min < phi_max"));
    }
    let phases: Vec<f64> = (0..n_phases)
        .map(|i| phi_min + (phi_max - phi_min) * i as f64 / (n_phases - 1) as f64)
        .collect();
    json(&beam_splitter_scan(&spec, &phases)?)
}

#[derive(Serialize)]
struct HomSeries {
    times: Vec<f64>,
    fidelity: Vec<f64>,
    nity: Vec<f64>,
    /// Row-major final correlation matrix.
    gamma: Vec<f64>,
    n_sites: usize,
}

/// Two-boson evolution from `|1, 2N>`. `disorder` is one of `none`,
/// `hopping_bdi`, `onsite_generic`, `onsite_inversion_symmetric`.
#[wasm_bindgen]
pub fn hom(
    n_cells: usize,
    v0: f64,
    t_final: f64,
    disorder: &str,
    strength: f64,
    temporal: bool,
    seed: u64,
) -> JsResult {
    let spec = lattice(n_cells, v0)?;
    let kind: DisorderKind = serde_json::from_value(serde_json::Value::from(disorder))
        .map_err(|_| JsError::new(&format!("unknown disorder kind `{disorder}`")))?;
    let dspec = if kind == DisorderKind::None {
        DisorderSpec::clean()
    } else {
        let policy = if temporal {
            TemporalPolicy::ResampleEveryStep
        } else {
            TemporalPolicy::Static
        };
        DisorderSpec::new(kind, strength, policy, seed)
    };
    let sched = ensemble_schedule(t_final, &dspec)?;
    let n = spec.n_sites();
    let mut block = DMatrix::zeros(n, 2);
    block[(0, 0)] = Complex64::new(1.0, 0.0);
    block[(n - 1, 1)] = Complex64::new(1.0, 0.0);

    let every = (sched.n_steps / 300).max(1);
    let mut out = HomSeries {
        times: vec![0.0],
        fidelity: vec![0.0],
        nity: vec![-2.0],
        gamma: Vec::new(),
        n_sites: n,
    };
    let mut gamma = DMatrix::zeros(n, n);
    evolve_with(&spec, &sched, &dspec, &mut block, |view| {
        if view.step % every == 0 || view.step == sched.n_steps {
            let pair = from_columns(&view.states.column(0).into_owned(), &view.states.column(1).into_owned(), false);
            gamma = correlation(&pair);
            out.times.push(view.t);
            out.fidelity.push(noon_fidelity(&pair));
            out.nity.push(noonity(&gamma));
        }
        Ok(())
    })?;
    out.gamma = gamma.transpose().iter().copied().collect();
    json(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_hom_ends_in_noon_state() {
        let s: serde_json::Value = serde_json::from_str(&hom(4, 0.6, 60.0, "none", 0.0, false, 0).unwrap()).unwrap();
        let nity = s["nity"].as_array().unwrap();
        assert_eq!(nity[0].as_f64(), Some(-2.0));
        assert_eq!(s["gamma"].as_array().unwrap().len(), 64);
    }

    #[test]
    fn spectrum_has_one_row_per_sample() {
        let s: serde_json::Value = serde_json::from_str(&spectrum(4, 0.6, 10.0, 5).unwrap()).unwrap();
        assert_eq!(s["energies"].as_array().unwrap().len(), 5);
        assert_eq!(s["energies"][0].as_array().unwrap().len(), 8);
    }
}
