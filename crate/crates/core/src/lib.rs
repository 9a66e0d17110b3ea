// SPDX-License-Identifier: Apache-2.0

//! Timing recovery for distributed sensor and control units without clock
//! synchronization.
//!
//! The crate simulates time-stamp traces from clock and link-delay models
//! ([`sim`]), estimates the true measurement or actuation instants from
//! central stamps alone or together with peripheral stamps ([`estimator`]),
//! and computes the steady-state jitter of both approaches
//! ([`steady_state`]).

pub mod clock;
pub mod config;
pub mod delay;
pub mod estimator;
pub mod process;
pub mod rng;
pub mod sim;
pub mod steady_state;
pub mod trace;

pub use clock::{quantize, ClockParams, ClockState};
pub use config::{ConfigError, ExperimentConfig};
pub use delay::{DelayModel, DelayState};
pub use estimator::{
    compare, run_estimation, summarize, EstimatorConfig, EstimatorError, RunOptions, Scenario,
    UnitModel,
};
pub use process::ScalarProcess;
pub use sim::{simulate, SimError, SimOutput, SystemConfig, Trigger, UnitConfig};
pub use steady_state::{
    camera_example, closed_form_eq17, example_report, jitter_budget, riccati_fixed_point,
    Interpretation, JitterBudget,
};
pub use trace::{StampRecord, Trace, TraceError, TraceMeta, TriggerKind};
