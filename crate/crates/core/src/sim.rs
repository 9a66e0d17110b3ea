// SPDX-License-Identifier: Apache-2.0

//! Discrete-event generation of timing instants and their time stamps.
//!
//! Each unit runs as an independent event stream with its own random
//! substreams; the streams are merged by arrival time at the central unit.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{quantize, ClockError, ClockParams, ClockState};
use crate::delay::{DelayError, DelayModel, DelayState};
use crate::rng::{substream, Purpose};
use crate::trace::{GroundTruth, StampRecord, Trace, TraceMeta, TriggerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    #[default]
    Sensor,
    Actuator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandSchedule {
    /// Commands at `start + j * period` (physical time).
    Periodic {
        period: f64,
        #[serde(default)]
        start: Option<f64>,
    },
    /// Explicit command instants (physical time).
    List { times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Fires every `period` seconds of the unit's own clock, each interval
    /// perturbed by `period_jitter_std`.
    Time {
        period: f64,
        #[serde(default)]
        period_jitter_std: f64,
    },
    /// Acts on commands from the central unit.
    Command {
        schedule: CommandSchedule,
        #[serde(default = "yes")]
        report: bool,
    },
    /// Exogenous Poisson events in physical time.
    Event { rate: f64 },
    /// Poisson events counted on the unit's own clock.
    Random { rate: f64 },
}

fn yes() -> bool {
    true
}

impl Trigger {
    pub fn kind(&self) -> TriggerKind {
        match self {
            Trigger::Time { .. } => TriggerKind::Time,
            Trigger::Command { .. } => TriggerKind::Command,
            Trigger::Event { .. } => TriggerKind::Event,
            Trigger::Random { .. } => TriggerKind::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitConfig {
    pub unit_id: u32,
    #[serde(default)]
    pub kind: UnitKind,
    pub trigger: Trigger,
    #[serde(default)]
    pub clock: ClockParams,
    /// Central-to-peripheral link; required for command-triggered units.
    #[serde(default)]
    pub link_up: Option<DelayModel>,
    /// Peripheral-to-central link.
    pub link_down: DelayModel,
    /// Mean delay between the event and the peripheral time stamp (local seconds).
    #[serde(default)]
    pub stamp_delay_q: f64,
    #[serde(default)]
    pub stamp_delay_q_std: f64,
    #[serde(default = "yes")]
    pub peripheral_stamps: bool,
    #[serde(default)]
    pub is_reference: bool,
}

/// Central clock: unit pace, constant offset from physical time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CentralClock {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub quantization_tick: f64,
}

impl CentralClock {
    pub fn read(&self, t: f64) -> f64 {
        quantize(t + self.offset, self.quantization_tick)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub central: CentralClock,
    pub units: Vec<UnitConfig>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unit {unit_id}: {field}: {message}")]
    InvalidUnit {
        unit_id: u32,
        field: &'static str,
        message: String,
    },
    #[error("system must have exactly one reference unit, found {0}")]
    ReferenceCount(usize),
    #[error("duplicate unit id {0}")]
    DuplicateUnit(u32),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("horizon {horizon} ends before the first event of unit {unit_id}")]
    HorizonTooShort { unit_id: u32, horizon: f64 },
    #[error("unit {unit_id}: clock: {source}")]
    Clock { unit_id: u32, source: ClockError },
    #[error("unit {unit_id}: {field}: {source}")]
    Delay {
        unit_id: u32,
        field: &'static str,
        source: DelayError,
    },
}

fn invalid(unit_id: u32, field: &'static str, message: impl Into<String>) -> SimError {
    SimError::InvalidUnit {
        unit_id,
        field,
        message: message.into(),
    }
}

impl UnitConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let id = self.unit_id;
        self.clock.validate().map_err(|source| SimError::Clock {
            unit_id: id,
            source,
        })?;
        self.link_down
            .validate()
            .map_err(|source| SimError::Delay {
                unit_id: id,
                field: "link_down",
                source,
            })?;
        if let Some(up) = &self.link_up {
            up.validate().map_err(|source| SimError::Delay {
                unit_id: id,
                field: "link_up",
                source,
            })?;
        }
        if !(self.stamp_delay_q_std >= 0.0 && self.stamp_delay_q.is_finite()) {
            return Err(invalid(id, "stamp_delay_q_std", "must be non-negative"));
        }
        match &self.trigger {
            Trigger::Time {
                period,
                period_jitter_std,
            } => {
                if !(*period > 0.0 && period.is_finite()) {
                    return Err(invalid(
                        id,
                        "trigger.period",
                        format!("must be positive, got {period}"),
                    ));
                }
                if !(*period_jitter_std >= 0.0 && period_jitter_std.is_finite()) {
                    return Err(invalid(
                        id,
                        "trigger.period_jitter_std",
                        "must be non-negative",
                    ));
                }
            }
            Trigger::Command { schedule, .. } => {
                if self.link_up.is_none() {
                    return Err(invalid(
                        id,
                        "link_up",
                        "required for command-triggered units",
                    ));
                }
                match schedule {
                    CommandSchedule::Periodic { period, start } => {
                        if !(*period > 0.0 && period.is_finite()) {
                            return Err(invalid(id, "trigger.schedule.period", "must be positive"));
                        }
                        if start.is_some_and(|s| !s.is_finite()) {
                            return Err(invalid(id, "trigger.schedule.start", "must be finite"));
                        }
                    }
                    CommandSchedule::List { times } => {
                        if times.iter().any(|t| !t.is_finite()) {
                            return Err(invalid(id, "trigger.schedule.times", "must be finite"));
                        }
                    }
                }
            }
            Trigger::Event { rate } | Trigger::Random { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(invalid(
                        id,
                        "trigger.rate",
                        format!("must be positive, got {rate}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut seen = std::collections::BTreeSet::new();
        for u in &self.units {
            if !seen.insert(u.unit_id) {
                return Err(SimError::DuplicateUnit(u.unit_id));
            }
            u.validate()?;
        }
        let refs = self.units.iter().filter(|u| u.is_reference).count();
        if refs != 1 {
            return Err(SimError::ReferenceCount(refs));
        }
        Ok(())
    }

    pub fn reference(&self) -> Option<&UnitConfig> {
        self.units.iter().find(|u| u.is_reference)
    }

    pub fn unit(&self, unit_id: u32) -> Option<&UnitConfig> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }
}

/// Counters collected while simulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SimDiagnostics {
    pub pace_clamps: u64,
    pub delay_rejections: u64,
    /// Reports held back so that they do not overtake an earlier report.
    pub fifo_holds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Trace,
    pub diagnostics: SimDiagnostics,
}

struct Event {
    record: StampRecord,
    truth: GroundTruth,
}

struct UnitRun {
    events: Vec<Event>,
    diagnostics: SimDiagnostics,
}

struct UnitSim<'a> {
    cfg: &'a UnitConfig,
    central: CentralClock,
    clock: ClockState,
    down: DelayState,
    up: Option<DelayState>,
    clock_rng: rand_chacha::ChaCha8Rng,
    trigger_rng: rand_chacha::ChaCha8Rng,
    up_rng: rand_chacha::ChaCha8Rng,
    down_rng: rand_chacha::ChaCha8Rng,
    stamp_rng: rand_chacha::ChaCha8Rng,
    events: Vec<Event>,
    fifo_holds: u64,
}

impl<'a> UnitSim<'a> {
    fn new(cfg: &'a UnitConfig, central: CentralClock, seed: u64) -> Result<Self, SimError> {
        let id = cfg.unit_id;
        let mut clock_rng = substream(seed, id, Purpose::Clock);
        let mut up_rng = substream(seed, id, Purpose::UpLink);
        let mut down_rng = substream(seed, id, Purpose::DownLink);
        let clock =
            ClockState::init(cfg.clock, 0.0, &mut clock_rng).map_err(|source| SimError::Clock {
                unit_id: id,
                source,
            })?;
        let down = DelayState::init(&cfg.link_down, 0.0, &mut down_rng).map_err(|source| {
            SimError::Delay {
                unit_id: id,
                field: "link_down",
                source,
            }
        })?;
        let up =
            match &cfg.link_up {
                Some(m) => Some(DelayState::init(m, 0.0, &mut up_rng).map_err(|source| {
                    SimError::Delay {
                        unit_id: id,
                        field: "link_up",
                        source,
                    }
                })?),
                None => None,
            };
        Ok(UnitSim {
            cfg,
            central,
            clock,
            down,
            up,
            clock_rng,
            trigger_rng: substream(seed, id, Purpose::Trigger),
            up_rng,
            down_rng,
            stamp_rng: substream(seed, id, Purpose::Stamp),
            events: Vec::new(),
            fifo_holds: 0,
        })
    }

    fn peripheral_stamp(&mut self) -> Option<f64> {
        if !self.cfg.peripheral_stamps {
            return None;
        }
        let z: f64 = self.stamp_rng.sample(StandardNormal);
        Some(self.clock.read() + self.cfg.stamp_delay_q + self.cfg.stamp_delay_q_std * z)
    }

    /// Report an event at physical time `t` over the down link.
    fn report(&mut self, t: f64, tx: Option<f64>) {
        self.down
            .step_to(&self.cfg.link_down, t, &mut self.down_rng);
        let mut arrival = t + self.down.sample(&self.cfg.link_down, &mut self.down_rng);
        // the link is FIFO: a report cannot overtake the previous one
        if let Some(previous) = self.events.last().map(|e| e.truth.arrival_t) {
            if arrival < previous {
                arrival = previous;
                self.fifo_holds += 1;
            }
        }
        let gamma_p = self.peripheral_stamp();
        self.push(t, arrival, Some(self.central.read(arrival)), tx, gamma_p);
    }

    fn push(
        &mut self,
        t: f64,
        arrival: f64,
        rx: Option<f64>,
        tx: Option<f64>,
        gamma_p: Option<f64>,
    ) {
        let k = self.events.len() as u64;
        self.events.push(Event {
            record: StampRecord {
                unit_id: self.cfg.unit_id,
                k,
                trigger: self.cfg.trigger.kind(),
                gamma_c_rx: rx,
                gamma_c_tx: tx,
                gamma_p,
            },
            truth: GroundTruth {
                true_t: t,
                arrival_t: arrival,
            },
        });
    }

    fn run(mut self, horizon: f64) -> UnitRun {
        match self.cfg.trigger.clone() {
            Trigger::Time {
                period,
                period_jitter_std,
            } => loop {
                let z: f64 = self.trigger_rng.sample(StandardNormal);
                let delta = (period + period_jitter_std * z).max(1e-9 * period);
                self.clock.advance_local(delta, &mut self.clock_rng);
                let t = self.clock.true_time();
                if t > horizon {
                    break;
                }
                self.report(t, None);
            },
            Trigger::Event { rate } => loop {
                let e: f64 = self.trigger_rng.sample(Exp1);
                self.clock.advance(e / rate, &mut self.clock_rng);
                let t = self.clock.true_time();
                if t > horizon {
                    break;
                }
                self.report(t, None);
            },
            Trigger::Random { rate } => loop {
                let e: f64 = self.trigger_rng.sample(Exp1);
                self.clock.advance_local(e / rate, &mut self.clock_rng);
                let t = self.clock.true_time();
                if t > horizon {
                    break;
                }
                self.report(t, None);
            },
            Trigger::Command { schedule, report } => self.run_commands(&schedule, report, horizon),
        }
        let diagnostics = SimDiagnostics {
            pace_clamps: self.clock.clamp_events(),
            delay_rejections: self.down.rejections()
                + self.up.as_ref().map_or(0, |u| u.rejections()),
            fifo_holds: self.fifo_holds,
        };
        UnitRun {
            events: self.events,
            diagnostics,
        }
    }

    fn run_commands(&mut self, schedule: &CommandSchedule, report: bool, horizon: f64) {
        let up_model = self
            .cfg
            .link_up
            .expect("validated: command units have an up link");
        let times: Box<dyn Iterator<Item = f64>> = match schedule {
            CommandSchedule::Periodic { period, start } => {
                let (period, start) = (*period, start.unwrap_or(*period));
                Box::new((0u64..).map(move |j| start + j as f64 * period))
            }
            CommandSchedule::List { times } => {
                let mut sorted = times.clone();
                sorted.sort_by(f64::total_cmp);
                Box::new(sorted.into_iter())
            }
        };
        // the next command waits until the previous exchange has completed
        let mut busy_until = f64::NEG_INFINITY;
        for scheduled in times {
            let tx = scheduled.max(busy_until);
            if tx > horizon {
                break;
            }
            let up = self.up.as_mut().expect("validated");
            up.step_to(&up_model, tx, &mut self.up_rng);
            let t = tx + up.sample(&up_model, &mut self.up_rng);
            if t > horizon {
                break;
            }
            let dt = (t - self.clock.true_time()).max(0.0);
            self.clock.advance(dt, &mut self.clock_rng);
            let gamma_tx = Some(self.central.read(tx));
            if report {
                self.report(t, gamma_tx);
                busy_until = self.events.last().map_or(t, |e| e.truth.arrival_t);
            } else {
                let gamma_p = self.peripheral_stamp();
                self.push(t, tx, None, gamma_tx, gamma_p);
                busy_until = t;
            }
        }
    }
}

/// Simulate all units up to `horizon` seconds of physical time.
///
/// Records are merged by arrival at the central unit (ties broken by unit id
/// and event index). The output depends only on `system`, `horizon` and
/// `seed`.
pub fn simulate(system: &SystemConfig, horizon: f64, seed: u64) -> Result<SimOutput, SimError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    system.validate()?;
    let runs: Vec<UnitRun> = system
        .units
        .par_iter()
        .map(|u| {
            let run = UnitSim::new(u, system.central, seed)?.run(horizon);
            if run.events.is_empty() {
                return Err(SimError::HorizonTooShort {
                    unit_id: u.unit_id,
                    horizon,
                });
            }
            Ok(run)
        })
        .collect::<Result<_, _>>()?;

    let mut diagnostics = SimDiagnostics::default();
    let mut events: Vec<Event> = Vec::new();
    for run in runs {
        diagnostics.pace_clamps += run.diagnostics.pace_clamps;
        diagnostics.delay_rejections += run.diagnostics.delay_rejections;
        diagnostics.fifo_holds += run.diagnostics.fifo_holds;
        events.extend(run.events);
    }
    events.sort_by(|a, b| {
        a.truth
            .arrival_t
            .total_cmp(&b.truth.arrival_t)
            .then(a.record.unit_id.cmp(&b.record.unit_id))
            .then(a.record.k.cmp(&b.record.k))
    });
    let (records, truth) = events.into_iter().map(|e| (e.record, e.truth)).unzip();
    Ok(SimOutput {
        trace: Trace {
            meta: TraceMeta::new(seed, ""),
            records,
            truth: Some(truth),
        },
        diagnostics,
    })
}
