// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration files and the estimator model matched to a
//! simulated system.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::estimator::{EstimatorConfig, PeriodModel, UnitModel};
use crate::process::ScalarProcess;
use crate::sim::{simulate, CentralClock, SimError, SimOutput, SystemConfig, Trigger, UnitConfig};
use crate::steady_state::Interpretation;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Optional adjustments applied on top of the matched estimator model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<Interpretation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmit_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_fraction: Option<f64>,
    /// Disable the causal-window projection.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_projection: bool,
    /// Unit models that replace the matched ones with the same id.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub units: Vec<UnitModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Simulated span of physical time, seconds.
    pub horizon: f64,
    #[serde(default)]
    pub central: CentralClock,
    pub units: Vec<UnitConfig>,
    #[serde(default)]
    pub estimator: EstimatorOverrides,
    /// Directory for run outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema_version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    System(#[from] SimError),
    #[error("estimator: {0}")]
    Estimator(String),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, "")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &format!("{}: ", path.display()))
    }

    fn parse(text: &str, prefix: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: prefix.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            central: self.central,
            units: self.units.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Version {
                found: self.schema_version,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidHorizon(self.horizon).into());
        }
        self.system().validate()?;
        let system = self.system();
        for m in &self.estimator.units {
            if system.unit(m.unit_id).is_none() {
                return Err(ConfigError::Estimator(format!(
                    "model for unit {} which is not in the system",
                    m.unit_id
                )));
            }
        }
        if let Some(w) = self.estimator.transmit_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(ConfigError::Estimator(format!(
                    "transmit_weight must lie in [0, 1], got {w}"
                )));
            }
        }
        if let Some(f) = self.estimator.warmup_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(ConfigError::Estimator(format!(
                    "warmup_fraction must lie in [0, 1), got {f}"
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Matched estimator model with the file's overrides applied.
    pub fn estimator_config(&self) -> EstimatorConfig {
        let o = &self.estimator;
        let mut cfg = EstimatorConfig::matched(&self.system(), o.transmit_weight.unwrap_or(0.5));
        if let Some(i) = o.interpretation {
            cfg.interpretation = i;
        }
        if let Some(f) = o.warmup_fraction {
            cfg.warmup_fraction = f;
        }
        if o.no_projection {
            cfg.reference_delay = None;
        }
        for m in &o.units {
            if let Some(slot) = cfg.unit_mut(m.unit_id) {
                *slot = m.clone();
            }
        }
        cfg
    }

    /// Simulate with `seed` (or the file's seed) and stamp the trace with
    /// the configuration hash and resolved estimator model.
    pub fn simulate(&self, seed: Option<u64>) -> Result<SimOutput, ConfigError> {
        let seed = seed.unwrap_or(self.seed);
        let mut out = simulate(&self.system(), self.horizon, seed)?;
        out.trace.meta.config_hash = self.hash();
        out.trace.meta.estimator = Some(self.estimator_config());
        Ok(out)
    }
}

/// Shift a process by `shift` and scale its fluctuation by `scale`.
fn shifted(process: &ScalarProcess, shift: f64, scale: f64) -> ScalarProcess {
    match *process {
        ScalarProcess::Constant { value } => ScalarProcess::Constant {
            value: scale * value + shift,
        },
        ScalarProcess::RandomWalk {
            initial,
            sigma_walk,
        } => ScalarProcess::RandomWalk {
            initial: scale * initial + shift,
            sigma_walk: scale.abs() * sigma_walk,
        },
        ScalarProcess::GaussMarkov {
            mean,
            tau,
            stationary_std,
        } => ScalarProcess::GaussMarkov {
            mean: scale * mean + shift,
            tau,
            stationary_std: scale.abs() * stationary_std,
        },
    }
}

fn fluctuation_std(process: &ScalarProcess) -> f64 {
    match *process {
        ScalarProcess::GaussMarkov { stationary_std, .. } => stationary_std,
        _ => 0.0,
    }
}

/// Mean offset `z - t` of the unit's central stamp from the true instant,
/// as a process, and the std of its white part.
fn stamp_offset(unit: &UnitConfig, w_tx: f64) -> (ScalarProcess, f64) {
    let down = &unit.link_down;
    match (&unit.trigger, &unit.link_up) {
        (Trigger::Command { report: true, .. }, Some(up)) => {
            let w_rx = 1.0 - w_tx;
            let up_mean = up.nominal();
            // The down link carries the dynamics; a dynamic up link only
            // widens them.
            let mut process = shifted(&down.state, -w_tx * up_mean, w_rx);
            if let ScalarProcess::Constant { .. } = down.state {
                process = shifted(&up.state, w_rx * down.nominal(), -w_tx);
            }
            let white =
                ((w_tx * up.residual_std).powi(2) + (w_rx * down.residual_std).powi(2)).sqrt();
            (process, white)
        }
        (Trigger::Command { report: false, .. }, Some(up)) => {
            (shifted(&up.state, 0.0, -1.0), up.residual_std)
        }
        _ => (down.state, down.residual_std),
    }
}

impl EstimatorConfig {
    /// Estimator model that matches the generating system: relative delays
    /// measured against the reference unit's nominal offset, clock and
    /// trigger models copied from the units.
    pub fn matched(system: &SystemConfig, transmit_weight: f64) -> EstimatorConfig {
        let reference = system
            .reference()
            .expect("validated system has a reference");
        let (ref_process, _) = stamp_offset(reference, transmit_weight);
        let ref_mean = ref_process.nominal();
        let units = system
            .units
            .iter()
            .map(|u| {
                let (process, white) = stamp_offset(u, transmit_weight);
                let mut m = UnitModel::new(u.unit_id);
                if u.is_reference {
                    let extra = fluctuation_std(&process);
                    m.residual_std = (white * white + extra * extra).sqrt();
                } else {
                    m.delay = shifted(&process, -ref_mean, 1.0);
                    m.delay_prior_std = fluctuation_std(&process);
                    m.residual_std = white;
                }
                m.pace = u.clock.pace;
                m.pace_white_std = u.clock.pace_white_std;
                if let Trigger::Time {
                    period,
                    period_jitter_std,
                } = u.trigger
                {
                    m.period = PeriodModel::Known { period };
                    m.period_jitter_std = period_jitter_std;
                }
                m.stamp_noise_std = u.stamp_delay_q_std;
                m
            })
            .collect();
        let mut cfg = EstimatorConfig::new(reference.unit_id, units);
        cfg.transmit_weight = transmit_weight;
        cfg.reference_delay = Some(ref_mean);
        cfg
    }
}
