//! Run configuration shared by the command-line subcommands.
//!
//! A configuration file is a flat JSON object whose keys are the fields of
//! [`SimConfig`]; omitted keys take their defaults and unknown keys are
//! rejected. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::{ErgodicConfig, FvConfig};
use crate::measure::BinSpec;
use crate::model::{DiffusionModel, TruncatedDomain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    /// `None` uses the model's default truncation.
    pub epsilon: Option<f64>,
    pub n_particles: usize,
    pub dt: f64,
    /// Unsampled epochs; `None` means 10% of `epochs`, rounded up.
    pub burn_in: Option<u64>,
    pub epochs: u64,
    /// Finite-time mode when set.
    pub horizon: Option<f64>,
    pub seed: u64,
    pub bins: usize,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core. Never changes results.
    pub workers: usize,
    /// Spectral grid nodes, endpoints included.
    pub grid_size: usize,
    /// Truncations of an ε-sweep, strictly decreasing.
    pub epsilons: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model: "brownian".into(),
            params: BTreeMap::new(),
            epsilon: None,
            n_particles: 1000,
            dt: 1e-4,
            burn_in: None,
            epochs: 10_000,
            horizon: None,
            seed: 1,
            bins: 100,
            out: PathBuf::from("out"),
            workers: 0,
            grid_size: 10_000,
            epsilons: vec![0.016, 0.008, 0.004, 0.002, 0.001],
        }
    }
}

impl SimConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })
    }

    /// Checks every field that does not need the model.
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::invalid("n_particles", "N must be ≥ 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be a positive real, got {}", self.dt)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "need at least one sampled epoch"));
        }
        if self.bins == 0 {
            return Err(Error::invalid("bins", "need at least one bin"));
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::invalid("horizon", format!("must be a nonnegative real, got {h}")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::invalid("epsilon", format!("must be a nonnegative real, got {e}")));
            }
        }
        Ok(())
    }

    pub fn diffusion_model(&self) -> Result<DiffusionModel> {
        DiffusionModel::from_catalog(&self.model, &self.params)
    }

    pub fn resolved_epsilon(&self, model: &DiffusionModel) -> f64 {
        self.epsilon.unwrap_or_else(|| model.default_epsilon())
    }

    pub fn truncation(&self) -> Result<TruncatedDomain> {
        self.validate()?;
        let model = self.diffusion_model()?;
        let eps = self.resolved_epsilon(&model);
        model.truncate(eps)
    }

    pub fn fv_config(&self) -> Result<FvConfig> {
        let mut cfg = FvConfig::new(self.n_particles, self.dt, self.seed)?;
        cfg.workers = self.workers;
        Ok(cfg)
    }

    pub fn ergodic_config(&self, trunc: &TruncatedDomain) -> Result<ErgodicConfig> {
        let mut erg = ErgodicConfig::new(self.epochs, BinSpec::for_truncation(trunc, self.bins)?);
        erg.burn_in = self.burn_in;
        Ok(erg)
    }
}

/// Parses `key=value` with a real value.
pub fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty parameter name in `{s}`"));
    }
    let v: f64 = v.trim().parse().map_err(|e| format!("parameter `{k}`: {e}"))?;
    Ok((k.to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let c = SimConfig::default();
        c.validate().unwrap();
        let back: SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: SimConfig = serde_json::from_str(r#"{"model": "wright-fisher", "n_particles": 50}"#).unwrap();
        assert_eq!(c.model, "wright-fisher");
        assert_eq!(c.n_particles, 50);
        assert_eq!(c.dt, 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<SimConfig>(r#"{"particles": 5}"#).is_err());
    }

    #[test]
    fn single_particle_is_rejected_by_name() {
        let c = SimConfig {
            n_particles: 1,
            ..SimConfig::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("N must be ≥ 2"), "{msg}");
        assert!(msg.contains("n_particles"), "{msg}");
    }

    #[test]
    fn params_parse() {
        assert_eq!(parse_param("c=2.5").unwrap(), ("c".to_string(), 2.5));
        assert!(parse_param("c").is_err());
        assert!(parse_param("=1").is_err());
        assert!(parse_param("c=x").is_err());
    }

    #[test]
    fn epsilon_outside_the_domain_is_rejected() {
        let c = SimConfig {
            model: "wright-fisher".into(),
            epsilon: Some(2.0),
            ..SimConfig::default()
        };
        assert!(c.truncation().is_err());
    }
}
