//! Plain-text `key = value` experiment configuration with a strict schema.
//!
//! Unknown keys, duplicate keys and malformed values are rejected with the
//! offending line. `to_text` writes the canonical normalized form, and
//! parsing it back gives an identical config.

use crate::adiabatic::check_alpha_list;
use crate::dynamics::dt_cap;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pekar,
    Evolve,
    GapTrack,
    AdiabaticSweep,
    CoercivityAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] =
        [ExperimentKind::Pekar, ExperimentKind::Evolve, ExperimentKind::GapTrack, ExperimentKind::AdiabaticSweep, ExperimentKind::CoercivityAudit];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Pekar => "pekar",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::GapTrack => "gap-track",
            ExperimentKind::AdiabaticSweep => "adiabatic-sweep",
            ExperimentKind::CoercivityAudit => "coercivity-audit",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::validation("kind", format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n_points: usize,
    pub box_radius: f64,
    pub alpha: f64,
    /// ε as a fraction of |e_P|.
    pub eps_over_ep: f64,
    pub dt: f64,
    /// Horizon in units of α².
    pub horizon_mult: f64,
    /// Steps between samples; `None` means α²/200 rounded to whole steps.
    pub sample_every: Option<usize>,
    pub alphas: Vec<f64>,
    pub out_dir: String,
    pub seed: u64,
    pub norm_budget: f64,
    pub energy_budget: f64,
    pub virial_budget: f64,
    pub audit_samples: usize,
    /// `None`: all available cores.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Pekar,
            n_points: 2048,
            box_radius: 40.0,
            alpha: 2.0,
            eps_over_ep: 0.005,
            dt: 0.01,
            horizon_mult: 5.0,
            sample_every: None,
            alphas: vec![3.0, 4.5, 6.75],
            out_dir: "out".to_string(),
            seed: 20240607,
            norm_budget: 1e-8,
            energy_budget: 1e-6,
            virial_budget: 1e-4,
            audit_samples: 100,
            workers: None,
        }
    }
}

pub const KEYS: [&str; 16] = [
    "kind",
    "n_points",
    "box_radius",
    "alpha",
    "eps_over_eP",
    "dt",
    "horizon_mult",
    "sample_every",
    "alphas",
    "out_dir",
    "seed",
    "norm_budget",
    "energy_budget",
    "virial_budget",
    "audit_samples",
    "workers",
];

fn parse_num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Config { line, message: format!("'{key}': cannot parse '{value}'") })
}

fn parse_auto(key: &str, value: &str, line: usize) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value, line).map(Some)
    }
}

fn fmt_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    /// Set one key from its textual value (`line` is used in diagnostics; 0 for flags).
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let value = value.trim();
        if value.is_empty() {
            return Err(Error::Config { line, message: format!("'{key}' has no value") });
        }
        match key {
            "kind" => self.kind = value.parse().map_err(|_| Error::Config { line, message: format!("unknown experiment kind '{value}'") })?,
            "n_points" => self.n_points = parse_num(key, value, line)?,
            "box_radius" => self.box_radius = parse_num(key, value, line)?,
            "alpha" => self.alpha = parse_num(key, value, line)?,
            "eps_over_eP" => self.eps_over_ep = parse_num(key, value, line)?,
            "dt" => self.dt = parse_num(key, value, line)?,
            "horizon_mult" => self.horizon_mult = parse_num(key, value, line)?,
            "sample_every" => self.sample_every = parse_auto(key, value, line)?,
            "alphas" => {
                self.alphas = value.split(',').map(|s| parse_num(key, s.trim(), line)).collect::<Result<_>>()?;
            }
            "out_dir" => self.out_dir = value.to_string(),
            "seed" => self.seed = parse_num(key, value, line)?,
            "norm_budget" => self.norm_budget = parse_num(key, value, line)?,
            "energy_budget" => self.energy_budget = parse_num(key, value, line)?,
            "virial_budget" => self.virial_budget = parse_num(key, value, line)?,
            "audit_samples" => self.audit_samples = parse_num(key, value, line)?,
            "workers" => self.workers = parse_auto(key, value, line)?,
            _ => return Err(Error::Config { line, message: format!("unknown key '{key}'") }),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "kind" => self.kind.to_string(),
            "n_points" => self.n_points.to_string(),
            "box_radius" => self.box_radius.to_string(),
            "alpha" => self.alpha.to_string(),
            "eps_over_eP" => self.eps_over_ep.to_string(),
            "dt" => self.dt.to_string(),
            "horizon_mult" => self.horizon_mult.to_string(),
            "sample_every" => fmt_auto(self.sample_every),
            "alphas" => self.alphas.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "),
            "out_dir" => self.out_dir.clone(),
            "seed" => self.seed.to_string(),
            "norm_budget" => self.norm_budget.to_string(),
            "energy_budget" => self.energy_budget.to_string(),
            "virial_budget" => self.virial_budget.to_string(),
            "audit_samples" => self.audit_samples.to_string(),
            "workers" => fmt_auto(self.workers),
            _ => unreachable!("key list is closed"),
        }
    }

    /// Canonical normalized form: every key, fixed order, one per line.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    /// Sample interval in steps for coupling `alpha`.
    pub fn sample_every_for(&self, alpha: f64) -> usize {
        self.sample_every.unwrap_or_else(|| ((alpha * alpha / 200.0 / self.dt).round() as usize).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 16 {
            return Err(Error::validation("n_points", "must be at least 16"));
        }
        let positive = [
            ("box_radius", self.box_radius),
            ("alpha", self.alpha),
            ("dt", self.dt),
            ("horizon_mult", self.horizon_mult),
            ("norm_budget", self.norm_budget),
            ("energy_budget", self.energy_budget),
            ("virial_budget", self.virial_budget),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.eps_over_ep >= 0.0) || !(self.eps_over_ep <= 0.1) {
            return Err(Error::validation("eps_over_eP", format!("must lie in [0, 0.1], got {}", self.eps_over_ep)));
        }
        if self.sample_every == Some(0) {
            return Err(Error::validation("sample_every", "must be positive or auto"));
        }
        if self.workers == Some(0) {
            return Err(Error::validation("workers", "must be positive or auto"));
        }
        if self.out_dir.is_empty() {
            return Err(Error::validation("out_dir", "must not be empty"));
        }
        match self.kind {
            ExperimentKind::Evolve | ExperimentKind::GapTrack => {
                if self.dt > dt_cap(self.alpha) {
                    return Err(Error::validation("dt", format!("{} exceeds cap min(0.02, 0.02·α²) = {}", self.dt, dt_cap(self.alpha))));
                }
            }
            ExperimentKind::AdiabaticSweep => {
                check_alpha_list(&self.alphas)?;
                let amin = self.alphas.iter().cloned().fold(f64::INFINITY, f64::min);
                if self.dt > dt_cap(amin) {
                    return Err(Error::validation("dt", format!("{} exceeds cap min(0.02, 0.02·α²) = {}", self.dt, dt_cap(amin))));
                }
            }
            ExperimentKind::CoercivityAudit => {
                if self.audit_samples == 0 {
                    return Err(Error::validation("audit_samples", "must be positive"));
                }
            }
            ExperimentKind::Pekar => {}
        }
        Ok(())
    }
}

/// Strict parse of a `key = value` document; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Config { line, message: format!("expected 'key = value', got '{body}'") })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config { line, message: format!("unknown key '{key}'") });
        }
        if seen.contains(&key) {
            return Err(Error::Config { line, message: format!("duplicate key '{key}'") });
        }
        seen.push(key);
        cfg.set(key, value, line)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default_pekar() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.kind, ExperimentKind::Pekar);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn negative_alpha_is_named() {
        let c = parse_config("alpha = -1").unwrap();
        match c.validate() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "alpha"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let text = "kind = adiabatic-sweep\n# comment\nalphas = 2, 3,4.5\nseed=9\nsample_every = 7\nworkers = 3\n";
        let c = parse_config(text).unwrap();
        let canon = c.to_text();
        assert_eq!(parse_config(&canon).unwrap().to_text(), canon);
        assert_eq!(parse_config(&canon).unwrap(), c);
    }

    #[test]
    fn strictness() {
        assert!(matches!(parse_config("bogus = 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("alpha = 1\nalpha = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("\nn_points = many"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("dt ="), Err(Error::Config { .. })));
        assert!(matches!(parse_config("kind = nothing"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("just text"), Err(Error::Config { .. })));
    }

    #[test]
    fn dt_cap_and_sweep_rules() {
        let mut c = ExperimentConfig { kind: ExperimentKind::Evolve, dt: 0.05, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Validation { field, .. }) if field == "dt"));
        c.kind = ExperimentKind::AdiabaticSweep;
        c.dt = 0.01;
        c.alphas = vec![3.0];
        assert!(matches!(c.validate(), Err(Error::Validation { field, .. }) if field == "alphas"));
    }
}
