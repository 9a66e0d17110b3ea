// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use timerec_core::clock::ClockParams;
use timerec_core::config::{EstimatorOverrides, ExperimentConfig, CONFIG_SCHEMA_VERSION};
use timerec_core::delay::DelayModel;
use timerec_core::estimator::{compare, CompareSummary, RunOptions, UnitSummary};
use timerec_core::process::ScalarProcess;
use timerec_core::sim::{CentralClock, CommandSchedule, Trigger, UnitConfig, UnitKind};
use timerec_core::trace::Trace;

/// Nominal link delay, large against every residual used in the tests so
/// that truncation to positive delays never matters.
pub const ETA: f64 = 0.05;

pub fn time_unit(unit_id: u32, period: f64, link_down: DelayModel) -> UnitConfig {
    UnitConfig {
        unit_id,
        kind: UnitKind::Sensor,
        trigger: Trigger::Time {
            period,
            period_jitter_std: 0.0,
        },
        clock: ClockParams::ideal(),
        link_up: None,
        link_down,
        stamp_delay_q: 0.0,
        stamp_delay_q_std: 0.0,
        peripheral_stamps: true,
        is_reference: false,
    }
}

pub fn command_unit(unit_id: u32, period: f64, up: DelayModel, down: DelayModel) -> UnitConfig {
    UnitConfig {
        unit_id,
        kind: UnitKind::Actuator,
        trigger: Trigger::Command {
            schedule: CommandSchedule::Periodic {
                period,
                start: None,
            },
            report: true,
        },
        clock: ClockParams::ideal(),
        link_up: Some(up),
        link_down: down,
        stamp_delay_q: 0.0,
        stamp_delay_q_std: 0.0,
        peripheral_stamps: true,
        is_reference: false,
    }
}

pub fn experiment(units: Vec<UnitConfig>, horizon: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        seed,
        horizon,
        central: CentralClock::default(),
        units,
        estimator: EstimatorOverrides::default(),
        outputs: None,
    }
}

/// Noise-free reference unit 0 plus the reduced generative model as unit 1:
/// constant pace with white perturbation `sigma_alpha`, constant delay with
/// white residual `sigma_delta`, constant stamping delay, unit intervals.
pub fn prop5(sigma_delta: f64, sigma_alpha: f64, events: usize, seed: u64) -> ExperimentConfig {
    let reference = UnitConfig {
        is_reference: true,
        ..time_unit(0, 1.0, DelayModel::constant(ETA, 0.0))
    };
    let mut unit = time_unit(1, 1.0, DelayModel::constant(ETA, sigma_delta));
    unit.clock.pace_white_std = sigma_alpha;
    unit.stamp_delay_q = 1e-3;
    experiment(vec![reference, unit], events as f64 + 0.5, seed)
}

pub fn delay_model(kind: &str, sigma_delta: f64) -> DelayModel {
    let state = match kind {
        "constant" => ScalarProcess::Constant { value: ETA },
        "random_walk" => ScalarProcess::RandomWalk {
            initial: ETA,
            sigma_walk: 2e-5,
        },
        "gauss_markov" => ScalarProcess::GaussMarkov {
            mean: ETA,
            tau: 50.0,
            stationary_std: 2.0 * sigma_delta,
        },
        other => panic!("unknown delay kind {other}"),
    };
    DelayModel {
        state,
        ..DelayModel::constant(ETA, sigma_delta)
    }
}

/// Run both scenarios on a simulated trace of `cfg`.
pub fn run_compare(cfg: &ExperimentConfig) -> (Trace, CompareSummary) {
    let out = cfg.simulate(None).expect("simulation");
    let est = cfg.estimator_config();
    let (_, _, summary) = compare(&out.trace, &est, RunOptions::default()).expect("estimation");
    (out.trace, summary)
}

pub fn unit(summary: &[UnitSummary], id: u32) -> &UnitSummary {
    summary
        .iter()
        .find(|u| u.unit_id == id)
        .expect("unit present")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
