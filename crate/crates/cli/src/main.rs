//! `ssh-hom`: batch front end writing CSV tables, SVG plots and a run
//! manifest.
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed numerical check.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssh_hom::ensemble::Regime;

use crate::config::RunConfig;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    /// Offending configuration key or failed invariant.
    pub key: Option<String>,
    pub message: String,
}

impl Failure {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            key: (!key.is_empty()).then(|| key.to_string()),
            message: message.into(),
        }
    }

    pub fn check(invariant: &str, message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            key: Some(invariant.to_string()),
            message: message.into(),
        }
    }

    pub fn io(err: std::io::Error) -> Self {
        Failure {
            code: 1,
            key: None,
            message: err.to_string(),
        }
    }
}

impl From<ssh_hom::Error> for Failure {
    fn from(e: ssh_hom::Error) -> Self {
        use ssh_hom::Error as E;
        let invariant = match &e {
            E::InvalidParameter { name, .. } => return Failure::config(name, e.to_string()),
            E::TimeOutOfRange { .. } | E::DrawLength { .. } => return Failure::config("", e.to_string()),
            E::NotHermitian { .. } => "hermiticity",
            E::NotUnitary { .. } => "unitarity",
            E::GapCollapse { .. } => "adiabaticity",
            E::NotConverged { .. } => "convergence",
            E::DimensionOverflow { .. } => "dimension",
            E::MissingObservable(_) => "observable",
        };
        Failure::check(invariant, e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "ssh-hom", version, about = "Adiabatic edge-state beam splitter and HOM interference on SSH chains")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (the SSH_HOM_OUT environment variable takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for disorder draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Integrator steps per run.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Instantaneous spectrum over the ramp.
    Spectrum,
    /// Port probabilities against the dynamical phase.
    BsScan,
    /// Two-boson interference from |1, 2N>.
    Hom,
    /// Ramp duration for a target dynamical phase.
    Calibrate {
        /// Target phase, e.g. `pi/4` or `0.785`.
        #[arg(long)]
        phase: Option<String>,
    },
    /// Disorder-averaged fidelity against strength for a symmetry regime.
    Sweep {
        #[arg(long)]
        regime: Option<String>,
        /// `start:step:stop` or a single value.
        #[arg(long)]
        strengths: Option<String>,
    },
    /// Fidelity against ramp duration under static disorder.
    TfScan {
        #[arg(long)]
        regime: Option<String>,
    },
    /// Symmetry residuals of the real-space and Bloch Hamiltonians.
    SymmetryCheck,
    /// Re-runs a manifest and compares output hashes.
    Replay { manifest: PathBuf },
}

fn output_dir(flag: Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    match std::env::var_os("SSH_HOM_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => flag.unwrap_or(fallback),
    }
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) -> Result<(), Failure> {
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(steps) = cli.steps {
        cfg.n_steps = Some(steps);
    }
    let parse_regime = |r: &String| {
        r.parse::<Regime>()
            .map_err(|e| Failure::config("regime", e.to_string()))
    };
    match &cli.command {
        Command::Calibrate { phase: Some(p) } => {
            cfg.phase = Some(
                config::parse_phase(p)
                    .ok_or_else(|| Failure::config("phase", format!("cannot parse phase `{p}`")))?,
            );
        }
        Command::Sweep { regime, strengths } => {
            if let Some(r) = regime {
                cfg.regime = Some(parse_regime(r)?);
            }
            if let Some(s) = strengths {
                cfg.strengths = Some(config::parse_range(s).ok_or_else(|| {
                    Failure::config("strengths", format!("expected start:step:stop, got `{s}`"))
                })?);
            }
        }
        Command::TfScan { regime: Some(r) } => cfg.regime = Some(parse_regime(r)?),
        _ => {}
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Replay { manifest } = &cli.command {
        let fallback = manifest
            .parent()
            .map(|p| p.join("replay"))
            .unwrap_or_else(|| PathBuf::from("replay"));
        let out = output_dir(cli.out.clone(), fallback);
        return manifest::replay(manifest, &out, cli.workers);
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&cli, &mut cfg)?;
    let name = command_name(&cli.command);
    let out = output_dir(cli.out.clone(), PathBuf::from("ssh-hom-out"));
    manifest::execute(name, &cfg, &out, cli.workers)?;
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum => "spectrum",
        Command::BsScan => "bs-scan",
        Command::Hom => "hom",
        Command::Calibrate { .. } => "calibrate",
        Command::Sweep { .. } => "sweep",
        Command::TfScan { .. } => "tf-scan",
        Command::SymmetryCheck => "symmetry-check",
        Command::Replay { .. } => "replay",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match (&f.code, &f.key) {
                (2, Some(key)) => eprintln!("config error at `{key}`: {}", f.message),
                (3, Some(key)) => eprintln!("numerical check `{key}` failed: {}", f.message),
                _ => eprintln!("error: {}", f.message),
            }
            ExitCode::from(f.code)
        }
    }
}
