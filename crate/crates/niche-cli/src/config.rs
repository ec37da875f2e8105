//! Run configuration: one JSON document per run, dispatched by its
//! `subcommand` field. Unknown keys are errors, so typos never pass
//! silently.

use niche_core::geometry::Domain;
use niche_core::particle::InitialLaw;
use niche_core::pde::{InitialField, SolveConfig};
use niche_core::ProcessParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("configuration must be a JSON object")]
    NotAnObject,
    #[error("missing required key \"subcommand\"")]
    MissingSubcommand,
    #[error("unknown subcommand {0:?}; expected simulate, solve, compare, validate, constants or phantom")]
    UnknownSubcommand(String),
    #[error("invalid {field}: {reason}")]
    OutOfRange { field: String, reason: String },
}

fn default_seed() -> u64 {
    0
}

fn default_band_factor() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub domain: Domain,
    pub process: ProcessParams,
    pub particles: usize,
    pub t_final: f64,
    pub initial: InitialLaw,
    pub bins: Vec<usize>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub left: String,
    pub right: String,
    /// When set, exit with a validation failure if the L1 distance exceeds it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "ValidateConfig::default_probes")]
    pub probes: usize,
    #[serde(default = "ValidateConfig::default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Group names to skip: kernel_normalization_1d, kernel_normalization_2d,
    /// kernel_symmetry, pi_measures, constants, neumann.
    #[serde(default)]
    pub skip: Vec<String>,
    #[serde(default = "ValidateConfig::default_process_1d")]
    pub process_1d: ProcessParams,
    #[serde(default = "ValidateConfig::default_process_2d")]
    pub process_2d: ProcessParams,
}

impl ValidateConfig {
    fn default_probes() -> usize {
        20
    }

    fn default_mc_samples() -> usize {
        10_000_000
    }

    fn default_process_1d() -> ProcessParams {
        ProcessParams::new(0.5, 0.5, 0.01).unwrap()
    }

    fn default_process_2d() -> ProcessParams {
        ProcessParams::new(0.5, 0.5, 0.05).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default = "ConstantsConfig::default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "ValidateConfig::default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ConstantsConfig {
    fn default_dims() -> Vec<usize> {
        vec![1, 2, 3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomCmdConfig {
    pub domain: Domain,
    pub process: ProcessParams,
    pub cells: usize,
    pub t_final: f64,
    pub initial: InitialField,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_band_factor")]
    pub band_factor: f64,
    #[serde(default = "PhantomCmdConfig::default_quad_tol")]
    pub quad_tol: f64,
}

impl PhantomCmdConfig {
    fn default_quad_tol() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Solve(SolveConfig),
    Compare(CompareConfig),
    Validate(ValidateConfig),
    Constants(ConstantsConfig),
    Phantom(PhantomCmdConfig),
}

impl RunConfig {
    pub fn subcommand(&self) -> &'static str {
        match self {
            RunConfig::Simulate(_) => "simulate",
            RunConfig::Solve(_) => "solve",
            RunConfig::Compare(_) => "compare",
            RunConfig::Validate(_) => "validate",
            RunConfig::Constants(_) => "constants",
            RunConfig::Phantom(_) => "phantom",
        }
    }

    /// Serialize back to the on-disk document shape.
    pub fn to_json(&self) -> Value {
        let mut v = match self {
            RunConfig::Simulate(c) => serde_json::to_value(c),
            RunConfig::Solve(c) => serde_json::to_value(c),
            RunConfig::Compare(c) => serde_json::to_value(c),
            RunConfig::Validate(c) => serde_json::to_value(c),
            RunConfig::Constants(c) => serde_json::to_value(c),
            RunConfig::Phantom(c) => serde_json::to_value(c),
        }
        .expect("configs serialize");
        v.as_object_mut()
            .expect("config is an object")
            .insert("subcommand".into(), Value::String(self.subcommand().into()));
        v
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value.as_object_mut().ok_or(ConfigError::NotAnObject)?;
    let sub = match obj.remove("subcommand") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(ConfigError::MissingSubcommand),
        None => return Err(ConfigError::MissingSubcommand),
    };
    let cfg = match sub.as_str() {
        "simulate" => RunConfig::Simulate(serde_json::from_value(value)?),
        "solve" => RunConfig::Solve(serde_json::from_value(value)?),
        "compare" => RunConfig::Compare(serde_json::from_value(value)?),
        "validate" => RunConfig::Validate(serde_json::from_value(value)?),
        "constants" => RunConfig::Constants(serde_json::from_value(value)?),
        "phantom" => RunConfig::Phantom(serde_json::from_value(value)?),
        other => return Err(ConfigError::UnknownSubcommand(other.into())),
    };
    validate_ranges(&cfg)?;
    Ok(cfg)
}

fn validate_ranges(cfg: &RunConfig) -> Result<(), ConfigError> {
    let positive = |field: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::OutOfRange { field: field.into(), reason: format!("{v} must be positive") })
        }
    };
    match cfg {
        RunConfig::Simulate(c) => {
            if c.particles == 0 {
                return Err(ConfigError::OutOfRange {
                    field: "particles".into(),
                    reason: "need at least one particle".into(),
                });
            }
            if c.t_final < 0.0 {
                return Err(ConfigError::OutOfRange {
                    field: "t_final".into(),
                    reason: "final time must be nonnegative".into(),
                });
            }
            if c.bins.is_empty() || c.bins.iter().any(|&b| b == 0) {
                return Err(ConfigError::OutOfRange {
                    field: "bins".into(),
                    reason: "bin counts must be positive".into(),
                });
            }
        }
        RunConfig::Solve(c) => {
            positive("cells", c.cells as f64)?;
            if c.t_final < 0.0 {
                return Err(ConfigError::OutOfRange {
                    field: "t_final".into(),
                    reason: "final time must be nonnegative".into(),
                });
            }
            c.coeffs.resolve(c.domain.dim()).map_err(|e| ConfigError::OutOfRange {
                field: "coeffs".into(),
                reason: e.to_string(),
            })?;
        }
        RunConfig::Phantom(c) => {
            positive("cells", c.cells as f64)?;
            positive("t_final", c.t_final.max(f64::MIN_POSITIVE))?;
        }
        RunConfig::Validate(c) => {
            positive("probes", c.probes as f64)?;
            positive("mc_samples", c.mc_samples as f64)?;
        }
        RunConfig::Constants(c) => {
            if c.dims.iter().any(|&d| d == 0 || d > 6) {
                return Err(ConfigError::OutOfRange {
                    field: "dims".into(),
                    reason: "dimensions must lie in 1..=6".into(),
                });
            }
        }
        RunConfig::Compare(_) => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_simulate_document() {
        let text = r#"{
            "subcommand": "simulate",
            "domain": {"shape": "interval", "a": 0.0, "b": 1.0},
            "process": {"s": 0.5, "p": 0.5, "h": 0.001},
            "particles": 100,
            "t_final": 0.01,
            "initial": {"type": "point_mass", "at": [0.5]},
            "bins": [32]
        }"#;
        let cfg = parse_config(text).unwrap();
        match &cfg {
            RunConfig::Simulate(c) => {
                assert!((c.process.tau() - 1e-3).abs() < 1e-15);
                assert!((c.process.walk_radius() - 0.001f64.sqrt()).abs() < 1e-12);
                assert_eq!(c.seed, 0);
            }
            _ => panic!("expected simulate"),
        }
    }

    #[test]
    fn out_of_range_exponent_is_rejected() {
        let text = r#"{
            "subcommand": "simulate",
            "domain": {"shape": "interval", "a": 0.0, "b": 1.0},
            "process": {"s": 1.5, "p": 0.5, "h": 0.001},
            "particles": 100,
            "t_final": 0.01,
            "initial": {"type": "uniform"},
            "bins": [32]
        }"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("fractional exponent"), "{err}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = r#"{
            "subcommand": "simulate",
            "domain": {"shape": "interval", "a": 0.0, "b": 1.0},
            "process": {"s": 0.5, "p": 0.5, "h": 0.001},
            "particles": 100,
            "t_final": 0.01,
            "initial": {"type": "uniform"},
            "bins": [32],
            "alpha_override": 0.3
        }"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("alpha_override"), "{err}");
    }

    #[test]
    fn solve_accepts_explicit_coefficients() {
        let text = r#"{
            "subcommand": "solve",
            "domain": {"shape": "interval", "a": 0.0, "b": 1.0},
            "cells": 64,
            "coeffs": {"explicit": {"alpha": 0.1, "beta": 0.2, "s": 0.5}},
            "initial": {"type": "uniform"},
            "t_final": 0.1,
            "snapshot_times": [0.1]
        }"#;
        assert!(matches!(parse_config(text).unwrap(), RunConfig::Solve(_)));
    }

    #[test]
    fn roundtrip_is_identity() {
        let text = r#"{
            "subcommand": "phantom",
            "domain": {"shape": "interval", "a": 0.0, "b": 1.0},
            "process": {"s": 0.5, "p": 0.3, "h": 0.001},
            "cells": 128,
            "t_final": 0.05,
            "initial": {"type": "uniform"},
            "snapshot_times": [0.05]
        }"#;
        let cfg = parse_config(text).unwrap();
        let json = cfg.to_json().to_string();
        let cfg2 = parse_config(&json).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn missing_subcommand() {
        assert!(matches!(
            parse_config(r#"{"domain": null}"#),
            Err(ConfigError::MissingSubcommand)
        ));
        assert!(matches!(
            parse_config(r#"{"subcommand": "explode"}"#),
            Err(ConfigError::UnknownSubcommand(_))
        ));
    }
}
