// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use timerec_core::clock::ClockParams;
use timerec_core::config::{EstimatorOverrides, ExperimentConfig, CONFIG_SCHEMA_VERSION};
use timerec_core::delay::DelayModel;
use timerec_core::sim::{CentralClock, CommandSchedule, Trigger, UnitConfig, UnitKind};

fn unit(unit_id: u32, trigger: Trigger, sigma: f64) -> UnitConfig {
    UnitConfig {
        unit_id,
        kind: UnitKind::Sensor,
        trigger,
        clock: ClockParams {
            pace_white_std: 1e-5,
            ..ClockParams::constant(1.0 + 2e-5 * unit_id as f64)
        },
        link_up: None,
        link_down: DelayModel::constant(0.02, sigma),
        stamp_delay_q: 1e-4,
        stamp_delay_q_std: 0.0,
        peripheral_stamps: true,
        is_reference: false,
    }
}

/// `units` peripheral units (plus a reference) mixing time, command and
/// random triggers, each producing roughly `rate` events per second.
pub fn fleet(units: u32, rate: f64, horizon: f64) -> ExperimentConfig {
    let mut all = vec![UnitConfig {
        is_reference: true,
        ..unit(
            0,
            Trigger::Time {
                period: 1.0 / rate,
                period_jitter_std: 0.0,
            },
            1e-4,
        )
    }];
    for id in 1..=units {
        let mut u = match id % 3 {
            0 => unit(
                id,
                Trigger::Time {
                    period: 1.0 / rate,
                    period_jitter_std: 1e-5,
                },
                1e-3,
            ),
            1 => unit(id, Trigger::Random { rate }, 1e-3),
            _ => unit(
                id,
                Trigger::Command {
                    schedule: CommandSchedule::Periodic {
                        period: 1.0 / rate,
                        start: None,
                    },
                    report: true,
                },
                1e-3,
            ),
        };
        if id % 3 == 2 {
            u.link_up = Some(DelayModel::constant(0.01, 1e-3));
        }
        all.push(u);
    }
    ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        seed: 1,
        horizon,
        central: CentralClock::default(),
        units: all,
        estimator: EstimatorOverrides::default(),
        outputs: None,
    }
}
