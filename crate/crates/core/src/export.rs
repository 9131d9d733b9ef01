//! CSV tables. Headers carry units (time in `1/w`, energies in `w`) and
//! site labels are 1-based.

use std::fmt::Write as _;
use std::io;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::{BeamSplitterRow, Trajectory};
use crate::ensemble::{EnsembleResult, RegimeReport, TfScanTable};
use crate::spectral::SpectrumCurves;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", format_number(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

pub const TIME: &str = "t [1/w]";

fn site_labels(prefix: &str, n: usize, unit: &str) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}{unit}")).collect()
}

/// `t, E_1, ..., E_2N`.
pub fn spectrum_table(curves: &SpectrumCurves) -> Table {
    let n = curves.energies.first().map_or(0, Vec::len);
    let mut table = Table::new(std::iter::once(TIME.to_string()).chain(site_labels("E_", n, " [w]")));
    for (t, e) in curves.times.iter().zip(&curves.energies) {
        table.push(std::iter::once(*t).chain(e.iter().copied()).collect());
    }
    table
}

/// `t, p_1, ..., p_2N, P, D_f, leakage`; leakage is the weight outside
/// sites 1 and 2N.
pub fn trajectory_table(traj: &Trajectory) -> Table {
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut table = Table::new(
        std::iter::once(TIME.to_string())
            .chain(site_labels("p_", n, ""))
            .chain(["P", "D_f", "leakage"].map(String::from)),
    );
    for (s, psi) in traj.samples.iter().zip(&traj.states) {
        let probs: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let leakage = (1.0 - probs[0] - probs[n - 1]).max(0.0);
        let mut row = vec![s.t];
        row.extend(probs);
        row.extend([s.parity, s.distribution_difference, leakage]);
        table.push(row);
    }
    table
}

/// One row per matrix row: `re(U_i1), im(U_i1), re(U_i2), ...`.
pub fn propagator_table(u: &DMatrix<Complex64>) -> Table {
    let header = (1..=u.ncols()).flat_map(|j| [format!("re U_{{i,{j}}}"), format!("im U_{{i,{j}}}")]);
    let mut table = Table::new(header);
    for i in 0..u.nrows() {
        table.push(u.row(i).iter().flat_map(|z| [z.re, z.im]).collect());
    }
    table
}

/// `q, Gamma_{q,1}, ..., Gamma_{q,2N}`.
pub fn gamma_table(gamma: &DMatrix<f64>) -> Table {
    let mut table = Table::new(std::iter::once("q".to_string()).chain(site_labels("r=", gamma.ncols(), "")));
    for q in 0..gamma.nrows() {
        let mut row = vec![(q + 1) as f64];
        row.extend(gamma.row(q).iter().copied());
        table.push(row);
    }
    table
}

pub fn beam_splitter_table(rows: &[BeamSplitterRow]) -> Table {
    let mut table = Table::new([
        "phi_d [rad]",
        "t_final [1/w]",
        "P(1->1)",
        "P(1->2N)",
        "leakage(1)",
        "P(2N->1)",
        "P(2N->2N)",
        "leakage(2N)",
        "cos^2(phi_d)",
        "sin^2(phi_d)",
    ]);
    for r in rows {
        table.push(vec![
            r.phi_d,
            r.t_final,
            r.from_port1.port1,
            r.from_port1.port2,
            r.from_port1.leakage,
            r.from_port2.port1,
            r.from_port2.port2,
            r.from_port2.leakage,
            r.phi_d.cos().powi(2),
            r.phi_d.sin().powi(2),
        ]);
    }
    table
}

/// One row per grid point.
pub fn ensemble_table(result: &EnsembleResult) -> Table {
    let mut table = Table::new(["strength [w]", "t_final [1/w]", "mean", "std", "min", "max", "n_flagged"]);
    for p in &result.points {
        table.push(vec![
            p.strength,
            p.t_final,
            p.stats.mean,
            p.stats.std,
            p.stats.min,
            p.stats.max,
            p.n_flagged() as f64,
        ]);
    }
    table
}

/// Raw per-realization values, one column per grid point.
pub fn realizations_table(result: &EnsembleResult) -> Table {
    let header = std::iter::once("realization".to_string()).chain(
        result
            .points
            .iter()
            .map(|p| format!("s={} T={}", format_number(p.strength), format_number(p.t_final))),
    );
    let mut table = Table::new(header);
    for k in 0..result.config.n_realizations {
        let mut row = vec![(k + 1) as f64];
        row.extend(result.points.iter().map(|p| p.values[k]));
        table.push(row);
    }
    table
}

pub fn tf_scan_table(scan: &TfScanTable) -> Table {
    let mut table = Table::new(["t_final [1/w]", "mean", "std", "min", "max"]);
    for r in &scan.rows {
        table.push(vec![r.t_final, r.stats.mean, r.stats.std, r.stats.min, r.stats.max]);
    }
    table
}

/// Columns of equal length sharing a time axis.
pub fn series_table(times: &[f64], columns: &[(&str, &[f64])]) -> Table {
    let mut table = Table::new(std::iter::once(TIME.to_string()).chain(columns.iter().map(|c| c.0.to_string())));
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![*t];
        row.extend(columns.iter().map(|c| c.1[i]));
        table.push(row);
    }
    table
}

/// Mean fidelity, Nity and parity along the evolution.
pub fn regime_series_table(report: &RegimeReport) -> Table {
    series_table(
        &report.times,
        &[
            ("fidelity", &report.mean_fidelity),
            ("Nity", &report.mean_nity),
            ("P", &report.mean_parity),
        ],
    )
}

/// `window, t_start, t_end, <D_f>, <|D_f|>`.
pub fn df_window_table(report: &RegimeReport) -> Table {
    let t_final = report.config.t_final;
    let n = report.df_windows.len();
    let mut table = Table::new(["window", "t_start [1/w]", "t_end [1/w]", "D_f", "|D_f|"]);
    for w in 0..n {
        table.push(vec![
            (w + 1) as f64,
            t_final * w as f64 / n as f64,
            t_final * (w + 1) as f64 / n as f64,
            report.df_windows[w],
            report.df_windows_abs[w],
        ]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -0.25, 1e-12, 3.5e20, 0.1 + 0.2, std::f64::consts::PI, -7e-5] {
            let s = format_number(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_number(1e-12), "1e-12");
        assert_eq!(format_number(252.5), "252.5");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![1.0, 0.5]);
        t.push(vec![2.0, -1e-9]);
        assert_eq!(t.to_csv(), "a,b\n1,0.5\n2,-1e-9\n");
        assert_eq!(t.column("b").unwrap(), vec![0.5, -1e-9]);
        assert!(t.column("c").is_none());
    }

    #[test]
    fn gamma_grid_is_one_based() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(gamma_table(&g).to_csv(), "q,r=1,r=2\n1,1,0\n2,0,1\n");
    }

    #[test]
    fn propagator_rows_are_complex_pairs() {
        let u = DMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, 2.0), Complex64::new(3.0, -4.0)]);
        let t = propagator_table(&u);
        assert_eq!(t.header, ["re U_{i,1}", "im U_{i,1}", "re U_{i,2}", "im U_{i,2}"]);
        assert_eq!(t.rows[0], vec![1.0, 2.0, 3.0, -4.0]);
    }

    #[test]
    fn spectrum_header_has_units() {
        let curves = SpectrumCurves {
            times: vec![0.0],
            energies: vec![vec![-1.0, 1.0]],
        };
        assert_eq!(spectrum_table(&curves).to_csv(), "t [1/w],E_1 [w],E_2 [w]\n0,-1,1\n");
    }
}
