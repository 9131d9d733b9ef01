use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use ssh_hom::dynamics::{
    calibrate_t_final, evolve, evolve_with, phase_rate, site_state, trajectory, BeamSplitterRow,
    PortDistribution, TrajectoryOptions, LEAKAGE_TOL,
};
use ssh_hom::ensemble::{
    run_ensemble_with, symmetry_regime_study_with, tf_scan_with, ExperimentConfig, ExperimentKind,
    Regime, StudyConfig,
};
use ssh_hom::export::{self, Table};
use ssh_hom::model::{
    bloch_symmetry_residuals, build_hamiltonian, chiral_operator, hermiticity_residual,
    inversion_residual, sample_disorder, DisorderKind, DisorderSpec, Schedule, TemporalPolicy,
};
use ssh_hom::multiparticle::{
    correlation, density, from_columns, noon_fidelity, noon_fidelity_phase_optimized, noonity,
};
use ssh_hom::spectral::spectrum_curves;
use ssh_hom::Complex64;

use crate::config::{expand, Observable, RunConfig, TimeGrid};
use crate::svg::{self, Series, PALETTE};
use crate::Failure;

#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
    /// Failed checks as `(invariant, message)`.
    pub failed: Vec<(String, String)>,
}

impl Report {
    fn csv(&mut self, name: &str, table: &Table) {
        self.files.push((name.to_string(), table.to_csv().into_bytes()));
    }

    fn svg(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    fn say(&mut self, line: String) {
        self.summary.push(line);
    }

    fn fail(&mut self, invariant: &str, message: String) {
        self.failed.push((invariant.to_string(), message));
    }
}

pub fn run(command: &str, cfg: &RunConfig, workers: usize) -> Result<Report, Failure> {
    cfg.lattice.validate()?;
    match command {
        "spectrum" => spectrum(cfg),
        "bs-scan" => bs_scan(cfg),
        "hom" => hom(cfg),
        "calibrate" => calibrate(cfg),
        "sweep" => sweep(cfg, workers),
        "tf-scan" => tf_scan(cfg, workers),
        "symmetry-check" => symmetry_check(cfg),
        other => Err(Failure::config("command", format!("unknown command `{other}`"))),
    }
}

fn schedule(cfg: &RunConfig, t_final: f64) -> Result<Schedule, Failure> {
    Ok(match cfg.n_steps {
        Some(n) => Schedule::with_steps(t_final, n)?,
        None => Schedule::new(t_final)?,
    })
}

fn spectrum(cfg: &RunConfig) -> Result<Report, Failure> {
    let t_final = cfg.t_final.unwrap_or(252.0);
    let samples = cfg.samples.unwrap_or(401);
    let curves = spectrum_curves(&cfg.lattice, t_final, samples, &cfg.disorder_spec())?;
    let n = cfg.lattice.n_sites();
    let mut report = Report::default();
    report.csv("spectrum.csv", &export::spectrum_table(&curves));

    let series: Vec<Series> = (0..n)
        .map(|b| {
            let ys = curves.energies.iter().map(|e| e[b]).collect();
            let in_gap = b == n / 2 - 1 || b == n / 2;
            let s = Series::new("", curves.times.clone(), ys, if in_gap { PALETTE[1] } else { "#777777" });
            if in_gap {
                s
            } else {
                s.thin()
            }
        })
        .collect();
    report.svg("spectrum.svg", svg::line_plot("Instantaneous spectrum", "t [1/w]", "E [w]", &series));

    let (k_peak, peak) = curves
        .energies
        .iter()
        .enumerate()
        .map(|(k, e)| (k, e[n / 2].abs()))
        .fold((0, 0.0), |b, x| if x.1 > b.1 { x } else { b });
    report.say(format!(
        "{} bands; largest in-gap |E| = {peak:.6} w at t = {:.3}",
        n, curves.times[k_peak]
    ));
    Ok(report)
}

fn two_port_block(n: usize) -> DMatrix<Complex64> {
    let mut block = DMatrix::zeros(n, 2);
    block[(0, 0)] = Complex64::new(1.0, 0.0);
    block[(n - 1, 1)] = Complex64::new(1.0, 0.0);
    block
}

fn distribution(col: nalgebra::DVectorView<Complex64>) -> PortDistribution {
    let port1: f64 = col[0].norm_sqr();
    let port2: f64 = col[col.len() - 1].norm_sqr();
    PortDistribution {
        port1,
        port2,
        leakage: (1.0 - port1 - port2).max(0.0),
    }
}

fn bs_scan(cfg: &RunConfig) -> Result<Report, Failure> {
    let phases = cfg.phases.clone().unwrap_or_else(RunConfig::default_phases);
    if phases.is_empty() || phases.iter().any(|p| !(*p > 0.0)) {
        return Err(Failure::config("phases", "phases must be positive"));
    }
    let rate = phase_rate(&cfg.lattice)?;
    let dspec = cfg.disorder_spec();
    let n = cfg.lattice.n_sites();
    let mut rows = Vec::with_capacity(phases.len());
    for &phi in &phases {
        let t_final = phi / rate;
        let u = evolve(&cfg.lattice, &schedule(cfg, t_final)?, &dspec, two_port_block(n))?;
        let (from_port1, from_port2) = (distribution(u.column(0)), distribution(u.column(1)));
        rows.push(BeamSplitterRow {
            phi_d: phi,
            t_final,
            from_port1,
            from_port2,
            flagged: from_port1.leakage > LEAKAGE_TOL || from_port2.leakage > LEAKAGE_TOL,
        });
    }
    let mut report = Report::default();
    report.csv("bs_scan.csv", &export::beam_splitter_table(&rows));

    let phi: Vec<f64> = rows.iter().map(|r| r.phi_d).collect();
    let dense: Vec<f64> = (0..=200)
        .map(|i| phi[0] + (phi[phi.len() - 1] - phi[0]) * i as f64 / 200.0)
        .collect();
    let series = vec![
        Series::new("cos^2", dense.clone(), dense.iter().map(|p| p.cos().powi(2)).collect(), PALETTE[0]).dashed(),
        Series::new("sin^2", dense.clone(), dense.iter().map(|p| p.sin().powi(2)).collect(), PALETTE[1]).dashed(),
        Series::new("P(1->1)", phi.clone(), rows.iter().map(|r| r.from_port1.port1).collect(), PALETTE[0]),
        Series::new("P(1->2N)", phi.clone(), rows.iter().map(|r| r.from_port1.port2).collect(), PALETTE[1]),
    ];
    report.svg("bs_scan.svg", svg::line_plot("Output ports for input |1>", "phi_d [rad]", "probability", &series));

    let t_traj = cfg.t_final.unwrap_or(252.0);
    let traj = trajectory(
        &cfg.lattice,
        &schedule(cfg, t_traj)?,
        &dspec,
        &site_state(n, 0),
        TrajectoryOptions::default(),
    )?;
    report.csv("trajectory.csv", &export::trajectory_table(&traj));

    let worst = rows
        .iter()
        .map(|r| {
            let (c2, s2) = (r.phi_d.cos().powi(2), r.phi_d.sin().powi(2));
            (r.from_port1.port1 - c2).abs().max((r.from_port1.port2 - s2).abs())
        })
        .fold(0.0, f64::max);
    report.say(format!("{} phases; max deviation from cos^2/sin^2 = {worst:.2e}", rows.len()));
    if let Some(r) = rows.iter().find(|r| r.flagged) {
        report.fail(
            "leakage",
            format!("leakage {:.3e} at phi_d = {}", r.from_port1.leakage.max(r.from_port2.leakage), r.phi_d),
        );
    }
    Ok(report)
}

fn hom(cfg: &RunConfig) -> Result<Report, Failure> {
    let t_final = cfg.t_final.unwrap_or(252.0);
    let sched = schedule(cfg, t_final)?;
    let dspec = cfg.disorder_spec();
    let n = cfg.lattice.n_sites();
    let every = (sched.n_steps / 400).max(1);
    let half = sched.n_steps / 2;

    let mut block = two_port_block(n);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut gammas = Vec::new();
    let mut record = |t: f64, states: &DMatrix<Complex64>, keep_gamma: bool| {
        let pair = from_columns(&states.column(0).into_owned(), &states.column(1).into_owned(), false);
        let gamma = correlation(&pair);
        let dens = density(&pair);
        rows.push(vec![
            t,
            noon_fidelity(&pair),
            noon_fidelity_phase_optimized(&pair),
            noonity(&gamma),
            dens[0],
            dens[n - 1],
        ]);
        if keep_gamma {
            gammas.push((t, gamma));
        }
    };
    record(0.0, &block, true);
    evolve_with(&cfg.lattice, &sched, &dspec, &mut block, |view| {
        if view.step % every == 0 || view.step == sched.n_steps {
            record(view.t, view.states, view.step == half || view.step == sched.n_steps);
        } else if view.step == half {
            record(view.t, view.states, true);
        }
        Ok(())
    })?;

    let mut report = Report::default();
    let mut table = Table::new([export::TIME, "fidelity", "fidelity (phase-optimized)", "Nity", "n_1", "n_2N"]);
    for r in &rows {
        table.push(r.clone());
    }
    report.csv("hom_series.csv", &table);
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    report.svg(
        "hom_series.svg",
        svg::line_plot(
            "HOM interference from |1,2N>",
            "t [1/w]",
            "",
            &[
                Series::new("fidelity", times.clone(), col(1), PALETTE[0]),
                Series::new("Nity", times.clone(), col(3), PALETTE[1]),
                Series::new("<n_1>", times.clone(), col(4), PALETTE[2]).dashed(),
            ],
        ),
    );
    for ((t, gamma), label) in gammas.iter().zip(["t0", "half", "final"]) {
        report.csv(&format!("gamma_{label}.csv"), &export::gamma_table(gamma));
        let grid: Vec<Vec<f64>> = (0..n).map(|q| gamma.row(q).iter().copied().collect()).collect();
        report.svg(
            &format!("gamma_{label}.svg"),
            svg::heatmap(&format!("Gamma(q, r) at t = {}", export::format_number(*t)), &grid),
        );
    }

    let last = rows.last().expect("final sample");
    report.say(format!(
        "t_final = {t_final}: NOON fidelity = {:.5} (phase-optimized {:.5}), Nity = {:.5}",
        last[1], last[2], last[3]
    ));
    let norm_error = block
        .column_iter()
        .map(|c| (c.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    if norm_error > 1e-10 {
        report.fail("unitarity", format!("column norm drifted by {norm_error:.3e}"));
    }
    Ok(report)
}

fn calibrate(cfg: &RunConfig) -> Result<Report, Failure> {
    let phase = cfg.phase.unwrap_or(FRAC_PI_4);
    let t_final = calibrate_t_final(&cfg.lattice, phase)?;
    let rate = phase_rate(&cfg.lattice)?;
    let mut report = Report::default();
    let mut table = Table::new(["phi_d [rad]", "t_final [1/w]", "dphi_d/dt_final [w]"]);
    table.push(vec![phase, t_final, rate]);
    report.csv("calibration.csv", &table);
    report.say(format!("t_final = {t_final:.4} for phi_d = {phase:.6}"));
    Ok(report)
}

fn observable(cfg: &RunConfig) -> Observable {
    cfg.observable.clone().unwrap_or(Observable::Hom)
}

fn default_t(obs: &Observable) -> f64 {
    match obs {
        Observable::Hom => 252.0,
        Observable::Bs => 504.0,
    }
}

fn experiment(cfg: &RunConfig, regime: Regime, kind: ExperimentKind, t_finals: Vec<f64>, strengths: Vec<f64>) -> ExperimentConfig {
    let mut ec = ExperimentConfig::new(kind, t_finals, regime.disorder_kind(), regime.policy(), strengths);
    ec.lattice = cfg.lattice;
    ec.n_steps = cfg.n_steps;
    ec.base_seed = cfg.seed();
    ec.n_realizations = cfg.n_realizations.unwrap_or(ec.n_realizations);
    ec
}

fn sweep(cfg: &RunConfig, workers: usize) -> Result<Report, Failure> {
    let regime = cfg.regime.unwrap_or(Regime::GenericTemporal);
    let strengths = cfg.strengths.clone().unwrap_or_else(|| expand(0.0, 0.05, 0.3));
    let obs = observable(cfg);
    let t_final = cfg.t_final.unwrap_or_else(|| default_t(&obs));
    let kind = match obs {
        Observable::Hom => ExperimentKind::HomFidelity,
        Observable::Bs => ExperimentKind::BsFidelity,
    };
    let ec = experiment(cfg, regime, kind, vec![t_final], strengths);
    let result = run_ensemble_with(&ec, workers)?;

    let mut report = Report::default();
    report.csv("sweep.csv", &export::ensemble_table(&result));
    report.csv("sweep_realizations.csv", &export::realizations_table(&result));
    let xs: Vec<f64> = result.points.iter().map(|p| p.strength).collect();
    report.svg(
        "sweep.svg",
        svg::line_plot(
            &format!("{} ({} realizations)", regime.name(), ec.n_realizations),
            "disorder strength [w]",
            "mean fidelity",
            &[
                Series::new("mean", xs.clone(), result.points.iter().map(|p| p.stats.mean).collect(), PALETTE[0]),
                Series::new("min", xs, result.points.iter().map(|p| p.stats.min).collect(), PALETTE[1]).dashed(),
            ],
        ),
    );
    for p in &result.points {
        report.say(format!(
            "strength {}: mean {:.4} std {:.4} min {:.4} flagged {}",
            export::format_number(p.strength),
            p.stats.mean,
            p.stats.std,
            p.stats.min,
            p.n_flagged()
        ));
    }

    if let Some(strength) = cfg.study_strength {
        let mut sc = StudyConfig::new(regime, strength, t_final);
        sc.lattice = cfg.lattice;
        sc.n_steps = cfg.n_steps;
        sc.base_seed = cfg.seed();
        sc.n_realizations = ec.n_realizations;
        let study = symmetry_regime_study_with(&sc, workers)?;
        report.csv("regime_series.csv", &export::regime_series_table(&study));
        report.csv("df_windows.csv", &export::df_window_table(&study));
        report.csv("regime_gamma_final.csv", &export::gamma_table(&study.final_gamma));
        report.svg(
            "regime_series.svg",
            svg::line_plot(
                &format!("{} at strength {strength}", regime.name()),
                "t [1/w]",
                "",
                &[
                    Series::new("fidelity", study.times.clone(), study.mean_fidelity.clone(), PALETTE[0]),
                    Series::new("Nity", study.times.clone(), study.mean_nity.clone(), PALETTE[1]),
                    Series::new("parity", study.times.clone(), study.mean_parity.clone(), PALETTE[2]),
                ],
            ),
        );
        report.say(format!(
            "study at {strength}: final fidelity {:.4}, Nity {:.4}, parity drift {:.4}, windowed <|D_f|> {:.4}",
            study.final_fidelity.mean,
            study.final_nity.mean,
            study.parity_drift,
            study.mean_abs_df()
        ));
    }
    Ok(report)
}

fn tf_scan(cfg: &RunConfig, workers: usize) -> Result<Report, Failure> {
    let regime = cfg.regime.unwrap_or(Regime::BdiStatic);
    if regime.policy() != TemporalPolicy::Static {
        return Err(Failure::config("regime", format!("`{}` is not a static regime", regime.name())));
    }
    let grid = cfg.t_grid.unwrap_or(TimeGrid {
        start: 300.0,
        stop: 800.0,
        step: 10.0,
    });
    if !(grid.step > 0.0 && grid.start > 0.0 && grid.stop >= grid.start) {
        return Err(Failure::config("t_grid", "need 0 < start <= stop and step > 0"));
    }
    let obs = observable(cfg);
    let kind = match obs {
        Observable::Hom => ExperimentKind::HomFidelity,
        Observable::Bs => ExperimentKind::TfScan,
    };
    let strength = cfg.strength.unwrap_or(0.2);
    let mut ec = experiment(cfg, regime, kind, expand(grid.start, grid.step, grid.stop), vec![strength]);
    ec.n_realizations = cfg.n_realizations.unwrap_or(1);
    if obs == Observable::Bs {
        ec.target_phase = Some(cfg.phase.unwrap_or(FRAC_PI_2));
    }
    let table = tf_scan_with(&ec, workers)?;

    let mut report = Report::default();
    report.csv("tf_scan.csv", &export::tf_scan_table(&table));
    let ts: Vec<f64> = table.rows.iter().map(|r| r.t_final).collect();
    report.svg(
        "tf_scan.svg",
        svg::line_plot(
            &format!("{} at strength {strength}", regime.name()),
            "t_final [1/w]",
            "fidelity",
            &[Series::new("mean", ts, table.rows.iter().map(|r| r.stats.mean).collect(), PALETTE[0])],
        ),
    );
    report.say(format!("best t_final = {} with mean fidelity {:.4}", table.argmax, table.max));
    Ok(report)
}

fn symmetry_check(cfg: &RunConfig) -> Result<Report, Failure> {
    let t_final = cfg.t_final.unwrap_or(252.0);
    let sched = Schedule::new(t_final)?;
    let strength = cfg.strength.unwrap_or(0.2);
    let n_cells = cfg.lattice.n_cells;
    let s = chiral_operator(n_cells);
    let mut csv = String::from("form,disorder,hermiticity,chiral,time_reversal,particle_hole,inversion\n");
    let mut report = Report::default();
    let kinds = [
        DisorderKind::None,
        DisorderKind::HoppingBdi,
        DisorderKind::OnsiteGeneric,
        DisorderKind::OnsiteInversionSymmetric,
    ];
    for kind in kinds {
        let dspec = if kind == DisorderKind::None {
            DisorderSpec::clean()
        } else {
            DisorderSpec::new(kind, strength, TemporalPolicy::Static, cfg.seed())
        };
        let draw = (kind != DisorderKind::None).then(|| sample_disorder(&dspec, cfg.lattice.n_sites(), 0));
        let h = build_hamiltonian(t_final / 2.0, &cfg.lattice, &sched, draw.as_ref(), &dspec)?;
        let real = h.to_real_dense();
        let complex = h.to_dense();
        let herm = hermiticity_residual(&complex);
        let chiral = (&s * &real * &s + &real).amax();
        let tr = complex.iter().map(|z| (z - z.conj()).norm()).fold(0.0, f64::max);
        let sc = s.map(|x| Complex64::new(x, 0.0));
        let ph = ssh_max(&(&sc * complex.conjugate() * &sc + &complex));
        let inv = inversion_residual(&real);
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let _ = writeln!(
            csv,
            "real_space,{name},{},{},{},{},{}",
            export::format_number(herm),
            export::format_number(chiral),
            export::format_number(tr),
            export::format_number(ph),
            export::format_number(inv)
        );
        report.say(format!(
            "real space {name:<24} herm {herm:.1e} chiral {chiral:.1e} TR {tr:.1e} PH {ph:.1e} inversion {inv:.1e}"
        ));
        if kind == DisorderKind::None && [herm, chiral, tr, ph, inv].iter().any(|r| *r > 1e-12) {
            report.fail("symmetry", format!("clean chain breaks a symmetry: {herm} {chiral} {tr} {ph} {inv}"));
        }
    }
    let b = bloch_symmetry_residuals(cfg.lattice.v0, cfg.lattice.w(), 64);
    let _ = writeln!(
        csv,
        "bloch,none,0,{},{},{},{}",
        export::format_number(b.chiral),
        export::format_number(b.time_reversal),
        export::format_number(b.particle_hole),
        export::format_number(b.inversion)
    );
    report.say(format!(
        "bloch (v = {}) chiral {:.1e} TR {:.1e} PH {:.1e} inversion {:.1e}",
        cfg.lattice.v0, b.chiral, b.time_reversal, b.particle_hole, b.inversion
    ));
    if [b.chiral, b.time_reversal, b.particle_hole, b.inversion].iter().any(|r| *r > 1e-12) {
        report.fail("symmetry", "Bloch Hamiltonian breaks a symmetry".to_string());
    }
    report.files.push(("symmetry.csv".to_string(), csv.into_bytes()));
    Ok(report)
}

fn ssh_max(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
