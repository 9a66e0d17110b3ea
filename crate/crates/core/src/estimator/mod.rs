// SPDX-License-Identifier: Apache-2.0

//! Per-unit timing filters.
//!
//! Every unit carries its own linear-Gaussian filter over the state
//! `[t, inverse pace, relative delay, period]`, of which each scenario uses a
//! subset:
//!
//! * scenario 1 (central stamps only): the relative delay follows its
//!   dynamic model and the timing estimate is the central stamp minus the
//!   delay estimate. Nothing links consecutive instants.
//! * scenario 2 (central plus peripheral stamps, or a time-triggered unit):
//!   consecutive instants are linked through `t' = inverse_pace * d + t`,
//!   linearised about the current inverse-pace mean, and the central stamp
//!   is a measurement of `t + delay`.
//!
//! The reference unit defines system time and carries no delay state, so
//! its central stamps measure `t` directly.

mod filter;
mod run;
mod summary;

pub use filter::{FilterCounters, FilterState, StepOutput, UnitFilter};
pub use run::{run_estimation, write_estimates, EstimateRow, EstimationRun, RunOptions};
pub use summary::{compare, summarize, CompareSummary, RunSummary, UnitComparison, UnitSummary};

use serde::{Deserialize, Serialize};

use crate::process::ScalarProcess;
use crate::steady_state::Interpretation;

/// Default oscillator tolerance used as the inverse-pace prior std.
pub const DEFAULT_PACE_TOLERANCE: f64 = 100e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    /// Central-unit time stamps only.
    CentralOnly = 1,
    /// Central and peripheral time stamps (or time-triggering).
    WithPeripheral = 2,
}

impl Scenario {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Scenario {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Scenario::CentralOnly),
            2 => Ok(Scenario::WithPeripheral),
            other => Err(format!("scenario must be 1 or 2, got {other}")),
        }
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.number()
    }
}

/// How the trigger period of a time-triggered unit is known when no
/// peripheral stamps are available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeriodModel {
    /// Not time-triggered, or the period is irrelevant.
    #[default]
    None,
    /// Period in local-clock seconds.
    Known { period: f64 },
    /// Estimated as a constant state initialised from the first two central
    /// stamps.
    Unknown {
        #[serde(default)]
        prior_std: Option<f64>,
    },
}

fn default_pace() -> ScalarProcess {
    ScalarProcess::Constant { value: 1.0 }
}

fn default_delay() -> ScalarProcess {
    ScalarProcess::Constant { value: 0.0 }
}

fn default_tolerance() -> f64 {
    DEFAULT_PACE_TOLERANCE
}

fn default_delay_prior() -> f64 {
    1e-3
}

/// Estimator-side model of one peripheral unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitModel {
    pub unit_id: u32,
    /// Dynamic model of the mean relative delay; its nominal value is the
    /// prior mean.
    #[serde(default = "default_delay")]
    pub delay: ScalarProcess,
    #[serde(default = "default_delay_prior")]
    pub delay_prior_std: f64,
    /// Std of the white residual on the (mean) central stamp.
    #[serde(default)]
    pub residual_std: f64,
    /// Clock pace model; the filter tracks its inverse.
    #[serde(default = "default_pace")]
    pub pace: ScalarProcess,
    #[serde(default)]
    pub pace_white_std: f64,
    #[serde(default = "default_tolerance")]
    pub inverse_pace_prior_std: f64,
    #[serde(default)]
    pub period: PeriodModel,
    /// Std of the trigger-interval jitter used when the interval comes from
    /// the period rather than peripheral stamps.
    #[serde(default)]
    pub period_jitter_std: f64,
    /// Std of the peripheral stamping delay `q`.
    #[serde(default)]
    pub stamp_noise_std: f64,
}

impl UnitModel {
    pub fn new(unit_id: u32) -> Self {
        UnitModel {
            unit_id,
            delay: default_delay(),
            delay_prior_std: default_delay_prior(),
            residual_std: 0.0,
            pace: default_pace(),
            pace_white_std: 0.0,
            inverse_pace_prior_std: DEFAULT_PACE_TOLERANCE,
            period: PeriodModel::None,
            period_jitter_std: 0.0,
            stamp_noise_std: 0.0,
        }
    }
}

fn half() -> f64 {
    0.5
}

fn default_warmup() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub reference_unit: u32,
    /// Weight of the transmit stamp in the transmit/receive mean.
    #[serde(default = "half")]
    pub transmit_weight: f64,
    /// Nominal delay of the reference unit. When set, timing estimates are
    /// projected onto the causal window implied by each record's stamps.
    #[serde(default)]
    pub reference_delay: Option<f64>,
    /// Leading share of each unit's events excluded from jitter statistics.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub interpretation: Interpretation,
    pub units: Vec<UnitModel>,
}

impl EstimatorConfig {
    pub fn new(reference_unit: u32, units: Vec<UnitModel>) -> Self {
        EstimatorConfig {
            reference_unit,
            transmit_weight: 0.5,
            reference_delay: None,
            warmup_fraction: default_warmup(),
            interpretation: Interpretation::default(),
            units,
        }
    }

    pub fn unit(&self, unit_id: u32) -> Option<&UnitModel> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }

    pub fn unit_mut(&mut self, unit_id: u32) -> Option<&mut UnitModel> {
        self.units.iter_mut().find(|u| u.unit_id == unit_id)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("record for unit {0} has no model in the estimator configuration")]
    UnknownUnit(u32),
    #[error("reference unit {0} has no model in the estimator configuration")]
    MissingReference(u32),
    #[error("unit {unit_id} record k={k} has no central time stamp")]
    MissingCentralStamp { unit_id: u32, k: u64 },
    #[error("unit {unit_id} record k={k}: peripheral stamp interval {d} is not positive")]
    NonMonotonePeripheral { unit_id: u32, k: u64, d: f64 },
    #[error("unit {unit_id}: record k={k} arrived after k={previous}")]
    OutOfOrder { unit_id: u32, k: u64, previous: u64 },
    #[error("invalid estimator configuration: {0}")]
    Config(String),
}
