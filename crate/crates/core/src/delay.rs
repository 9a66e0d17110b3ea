// SPDX-License-Identifier: Apache-2.0

//! One-directional communication delay: a correlated state plus a white
//! residual, `delay = eta + nu`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::process::{LinearBlock, ProcessError, ScalarProcess};

pub const DEFAULT_DELAY_FLOOR: f64 = 1e-6;

/// Share of rejected residual draws above which a link is reported as
/// pathological.
pub const REJECTION_WARN_RATE: f64 = 0.5;

fn default_floor() -> f64 {
    DEFAULT_DELAY_FLOOR
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualDistribution {
    #[default]
    Gaussian,
    /// Zero-mean exponential, `Exp(1/std) - std`; models queueing tails.
    ShiftedExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinkDirection {
    /// Peripheral to central (reports).
    #[default]
    ToCentral,
    /// Central to peripheral (commands).
    ToPeripheral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub state: ScalarProcess,
    #[serde(default)]
    pub residual_std: f64,
    #[serde(default)]
    pub residual: ResidualDistribution,
    #[serde(default)]
    pub direction: LinkDirection,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DelayError {
    #[error("invalid delay state model: {0}")]
    State(#[from] ProcessError),
    #[error("residual std must be non-negative, got {0}")]
    NegativeResidual(f64),
    #[error("delay floor must be positive, got {0}")]
    NonPositiveFloor(f64),
}

impl DelayModel {
    /// Fixed delay with Gaussian residual.
    pub fn constant(eta: f64, residual_std: f64) -> Self {
        DelayModel {
            state: ScalarProcess::Constant { value: eta },
            residual_std,
            residual: ResidualDistribution::Gaussian,
            direction: LinkDirection::ToCentral,
            floor: DEFAULT_DELAY_FLOOR,
        }
    }

    pub fn with_direction(mut self, direction: LinkDirection) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        self.state.validate()?;
        if !(self.residual_std >= 0.0 && self.residual_std.is_finite()) {
            return Err(DelayError::NegativeResidual(self.residual_std));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(DelayError::NonPositiveFloor(self.floor));
        }
        Ok(())
    }

    /// Nominal delay the link centres on.
    pub fn nominal(&self) -> f64 {
        self.state.nominal().max(self.floor)
    }

    fn draw_residual<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.residual_std == 0.0 {
            return 0.0;
        }
        match self.residual {
            ResidualDistribution::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.residual_std * z
            }
            ResidualDistribution::ShiftedExponential => {
                let e: f64 = rng.sample(Exp1);
                self.residual_std * (e - 1.0)
            }
        }
    }
}

/// Linear-Gaussian block for the estimator's mean relative delay. No sign
/// constraint: the estimated delay is relative to the system-time offset.
pub fn delay_dynamic_block(model: &DelayModel, step: f64) -> LinearBlock {
    model
        .state
        .block(step, model.residual_std * model.residual_std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayState {
    eta: f64,
    last_event_time: f64,
    samples: u64,
    rejections: u64,
    warned: bool,
}

impl DelayState {
    pub fn init<R: Rng + ?Sized>(
        model: &DelayModel,
        t0: f64,
        rng: &mut R,
    ) -> Result<Self, DelayError> {
        model.validate()?;
        Ok(DelayState {
            eta: model.state.initial(rng).max(model.floor),
            last_event_time: t0,
            samples: 0,
            rejections: 0,
            warned: false,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn last_event_time(&self) -> f64 {
        self.last_event_time
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Residual draws discarded because the total delay was not positive.
    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    /// Evolve the delay state by `dt` seconds, projecting onto `eta >= floor`.
    pub fn step<R: Rng + ?Sized>(&mut self, model: &DelayModel, dt: f64, rng: &mut R) {
        assert!(dt >= 0.0, "delay state cannot step backwards (dt = {dt})");
        self.eta = model.state.step(self.eta, dt, rng).max(model.floor);
        self.last_event_time += dt;
    }

    /// Evolve the state up to physical time `t` (no-op if `t` is not later).
    pub fn step_to<R: Rng + ?Sized>(&mut self, model: &DelayModel, t: f64, rng: &mut R) {
        let dt = (t - self.last_event_time).max(0.0);
        self.step(model, dt, rng);
        self.last_event_time = self.last_event_time.max(t);
    }

    /// Draw a strictly positive total delay `eta + nu`, rejecting residuals
    /// that would break causality.
    pub fn sample<R: Rng + ?Sized>(&mut self, model: &DelayModel, rng: &mut R) -> f64 {
        loop {
            let total = self.eta + model.draw_residual(rng);
            if total > 0.0 {
                self.samples += 1;
                self.check_rejection_rate();
                return total;
            }
            self.rejections += 1;
        }
    }

    fn check_rejection_rate(&mut self) {
        let attempts = self.samples + self.rejections;
        if !self.warned
            && attempts >= 100
            && self.rejections as f64 / attempts as f64 > REJECTION_WARN_RATE
        {
            self.warned = true;
            log::warn!(
                "delay link rejects {} of {} residual draws; residual std is large relative to the delay state",
                self.rejections,
                attempts
            );
        }
    }
}
