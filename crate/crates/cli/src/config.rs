//! Run configuration: one JSON document, every key optional.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssh_hom::ensemble::Regime;
use ssh_hom::model::{DisorderKind, DisorderSpec, LatticeSpec, TemporalPolicy};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Bs,
    Hom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderConfig {
    pub kind: DisorderKind,
    pub strength: f64,
    #[serde(default = "static_policy")]
    pub policy: TemporalPolicy,
    #[serde(default)]
    pub refresh_interval: Option<f64>,
}

fn static_policy() -> TemporalPolicy {
    TemporalPolicy::Static
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub lattice: LatticeSpec,
    /// Ramp duration; each command has its own default.
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
    /// Single-run disorder for `spectrum`, `hom` and `bs-scan`.
    pub disorder: Option<DisorderConfig>,
    /// Time samples of the spectrum.
    pub samples: Option<usize>,
    /// Beam-splitter phases in radians.
    pub phases: Option<Vec<f64>>,
    /// Target phase for `calibrate`.
    pub phase: Option<f64>,
    pub regime: Option<Regime>,
    pub strengths: Option<Vec<f64>>,
    pub n_realizations: Option<usize>,
    pub observable: Option<Observable>,
    /// Also run the regime study at this strength in `sweep`.
    pub study_strength: Option<f64>,
    pub t_grid: Option<TimeGrid>,
    pub strength: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let key = unknown_field(&inner.to_string()).unwrap_or(path);
            Failure::config(&key, inner.to_string())
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn disorder_spec(&self) -> DisorderSpec {
        match &self.disorder {
            None => DisorderSpec::clean(),
            Some(d) => {
                let mut spec = DisorderSpec::new(d.kind, d.strength, d.policy, self.seed());
                spec.refresh_interval = d.refresh_interval;
                spec
            }
        }
    }

    pub fn default_phases() -> Vec<f64> {
        (0..9).map(|i| FRAC_PI_2 + PI * i as f64 / 8.0).collect()
    }
}

/// Extracts `foo` from serde's "unknown field `foo`, expected ..." message.
fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Parses `pi/4`, `3pi/2`, `3*pi/4`, `pi` or a plain number.
pub fn parse_phase(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().ok()?),
        None => (s.clone(), 1.0),
    };
    let value = match num.strip_suffix("pi") {
        Some(coef) => {
            let coef = coef.strip_suffix('*').unwrap_or(coef);
            let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().ok()? };
            c * PI
        }
        None => num.parse::<f64>().ok()?,
    };
    let v = value / den;
    v.is_finite().then_some(v)
}

/// Expands `start:step:stop` (inclusive) into a grid.
pub fn parse_range(text: &str) -> Option<Vec<f64>> {
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match parts[..] {
        [single] => Some(vec![single]),
        [start, step, stop] if step > 0.0 && stop >= start => Some(expand(start, step, stop)),
        _ => None,
    }
}

pub fn expand(start: f64, step: f64, stop: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn phases() {
        assert_eq!(parse_phase("pi/4"), Some(FRAC_PI_4));
        assert_eq!(parse_phase("PI / 2"), Some(FRAC_PI_2));
        assert_eq!(parse_phase("3pi/2"), Some(1.5 * PI));
        assert_eq!(parse_phase("3*pi/4"), Some(0.75 * PI));
        assert_eq!(parse_phase("pi"), Some(PI));
        assert_eq!(parse_phase("0.5"), Some(0.5));
        assert_eq!(parse_phase("tau"), None);
        assert_eq!(parse_phase("pi/0"), None);
    }

    #[test]
    fn ranges() {
        assert_eq!(
            parse_range("0:0.05:0.3").unwrap(),
            vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
        );
        assert_eq!(parse_range("0.2").unwrap(), vec![0.2]);
        assert!(parse_range("0:0:1").is_none());
        assert!(parse_range("1:0.1:0").is_none());
        assert!(parse_range("a:b").is_none());
    }

    #[test]
    fn config_errors_name_the_key() {
        let err = RunConfig::parse(r#"{"t_finale": 3}"#).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("t_finale"));
        let err = RunConfig::parse(r#"{"lattice": {"n_cells": "eight", "v0": 0.6}}"#).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("lattice.n_cells"));
        let err = RunConfig::parse(r#"{"regime": "bdi"}"#).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("regime"));
    }

    #[test]
    fn empty_config_is_valid() {
        let cfg = RunConfig::parse("{}").unwrap();
        assert_eq!(cfg.lattice, LatticeSpec::default());
        assert_eq!(cfg.disorder_spec().kind, DisorderKind::None);
    }
}
