use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssh_hom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssh-hom"))
        .current_dir(dir)
        .env_remove("SSH_HOM_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"lattice": {"n_cells": 8, "v00": 0.6}}"#).unwrap();
    let o = ssh_hom(dir.path(), &["--config", "c.json", "hom"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`v00`"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"lattice": {"n_cells": 0, "v0": 0.6}}"#).unwrap();
    let o = ssh_hom(dir.path(), &["--config", "c.json", "spectrum"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_cells"), "{}", stderr(&o));

    let o = ssh_hom(dir.path(), &["calibrate", "--phase", "tau"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`phase`"));

    let o = ssh_hom(dir.path(), &["tf-scan", "--regime", "bdi_temporal"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_quarter_phase() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssh_hom(dir.path(), &["--out", "cal", "calibrate", "--phase", "pi/4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("cal/calibration.csv")).unwrap();
    let t = column(&csv, "t_final [1/w]")[0];
    assert!((t - 252.0).abs() / 252.0 < 0.01, "t_final = {t}");
    assert!(dir.path().join("cal/manifest.json").exists());
}

#[test]
fn hom_defaults_reach_noon_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssh_hom(dir.path(), &["--out", "h", "hom"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("h/hom_series.csv")).unwrap();
    let fid = column(&csv, "fidelity");
    let nity = column(&csv, "Nity");
    assert_eq!(nity[0], -2.0);
    assert!(*fid.last().unwrap() >= 0.99);
    assert!(*nity.last().unwrap() >= 1.9);
    for f in ["gamma_t0", "gamma_half", "gamma_final"] {
        assert!(dir.path().join(format!("h/{f}.csv")).exists());
        assert!(dir.path().join(format!("h/{f}.svg")).exists());
    }
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ssh-hom"))
        .current_dir(dir.path())
        .env("SSH_HOM_OUT", "from_env")
        .args(["--out", "from_flag", "symmetry-check"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from_env/symmetry.csv").exists());
    assert!(!dir.path().join("from_flag").exists());
}

#[test]
fn symmetry_check_clean_chain_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssh_hom(dir.path(), &["--out", "s", "symmetry-check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("s/symmetry.csv")).unwrap();
    let clean = csv.lines().find(|l| l.starts_with("real_space,none,")).unwrap();
    assert!(clean.split(',').skip(2).all(|v| v.parse::<f64>().unwrap() <= 1e-12));
    let bdi = csv.lines().find(|l| l.starts_with("real_space,hopping_bdi,")).unwrap();
    let fields: Vec<f64> = bdi.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    assert!(fields[1] <= 1e-12, "BDI disorder keeps chiral symmetry");
    assert!(fields[4] > 1e-3, "BDI disorder breaks inversion");
}

#[test]
fn sweep_replays_byte_identically_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"n_realizations": 3, "t_final": 120, "seed": 7}"#).unwrap();
    let o = ssh_hom(
        dir.path(),
        &["--config", "c.json", "--out", "a", "--workers", "1", "sweep", "--regime", "bdi_static", "--strengths", "0:0.1:0.2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("strength 0.2"));
    let csv = fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let o = ssh_hom(dir.path(), &["--out", "b", "--workers", "3", "replay", "a/manifest.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["sweep.csv", "sweep_realizations.csv", "sweep.svg"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn tampered_manifest_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssh_hom(dir.path(), &["--out", "a", "calibrate"]);
    assert!(o.status.success());
    let path = dir.path().join("a/manifest.json");
    let text = fs::read_to_string(&path).unwrap();
    let mut manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    manifest["files"][0]["sha256"] = "00".into();
    fs::write(&path, manifest.to_string()).unwrap();
    let o = ssh_hom(dir.path(), &["--out", "b", "replay", "a/manifest.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("reproducibility"));
}
