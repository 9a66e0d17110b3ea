// SPDX-License-Identifier: Apache-2.0

//! Clock parameterisation and clock readings relative to physical time.
//!
//! A clock reading is the running sum of mean pace times elapsed physical time
//! plus the folded initial offset `beta0 + u * t0`. Readings are accumulated
//! with compensated summation so long constant-pace runs stay exact to the
//! last few ulps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::process::{LinearBlock, ProcessError, ScalarProcess};

/// Smallest pace a simulated clock may take.
pub const MIN_PACE: f64 = 10.0 * f64::EPSILON;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockParams {
    /// Dimensionless unit conversion factor relative to physical time.
    #[serde(default = "one")]
    pub unit_conversion: f64,
    /// Clock offset at the time origin, seconds.
    #[serde(default)]
    pub initial_offset: f64,
    /// Pace process (pace includes the unit conversion, ~1 for a good clock).
    pub pace: ScalarProcess,
    /// Std of the white perturbation drawn independently for every step.
    #[serde(default)]
    pub pace_white_std: f64,
    /// Reading resolution in seconds; zero means continuous.
    #[serde(default)]
    pub quantization_tick: f64,
}

impl Default for ClockParams {
    fn default() -> Self {
        ClockParams::ideal()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClockError {
    #[error("invalid pace model: {0}")]
    Pace(#[from] ProcessError),
    #[error("unit conversion must be positive, got {0}")]
    NonPositiveUnit(f64),
    #[error("quantization tick must be non-negative, got {0}")]
    NegativeTick(f64),
    #[error("time origin must be finite, got {0}")]
    NonFiniteOrigin(f64),
    #[error("pace must be positive, got {0}")]
    NonPositivePace(f64),
    #[error("pace white-noise std must be non-negative, got {0}")]
    NegativeWhiteStd(f64),
}

impl ClockParams {
    /// Identity clock: reads physical time exactly.
    pub fn ideal() -> Self {
        ClockParams {
            unit_conversion: 1.0,
            initial_offset: 0.0,
            pace: ScalarProcess::Constant { value: 1.0 },
            pace_white_std: 0.0,
            quantization_tick: 0.0,
        }
    }

    pub fn constant(pace: f64) -> Self {
        ClockParams {
            pace: ScalarProcess::Constant { value: pace },
            ..ClockParams::ideal()
        }
    }

    pub fn validate(&self) -> Result<(), ClockError> {
        if !(self.unit_conversion > 0.0 && self.unit_conversion.is_finite()) {
            return Err(ClockError::NonPositiveUnit(self.unit_conversion));
        }
        if !(self.quantization_tick >= 0.0 && self.quantization_tick.is_finite()) {
            return Err(ClockError::NegativeTick(self.quantization_tick));
        }
        if !(self.pace_white_std >= 0.0 && self.pace_white_std.is_finite()) {
            return Err(ClockError::NegativeWhiteStd(self.pace_white_std));
        }
        self.pace.validate()?;
        let nominal = self.pace.nominal();
        if nominal <= 0.0 {
            return Err(ClockError::NonPositivePace(nominal));
        }
        Ok(())
    }
}

/// Kahan-Babuska (Neumaier) running sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn new(value: f64) -> Self {
        CompensatedSum {
            sum: value,
            compensation: 0.0,
        }
    }

    fn add(&mut self, delta: f64) {
        let t = self.sum + delta;
        if self.sum.abs() >= delta.abs() {
            self.compensation += (self.sum - t) + delta;
        } else {
            self.compensation += (delta - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Evolving state of one simulated clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockState {
    reading: CompensatedSum,
    /// Current value of the underlying pace process.
    pace: f64,
    /// Mean pace applied over the most recent step.
    step_pace: f64,
    true_time: CompensatedSum,
    clamp_events: u64,
    params: ClockParams,
}

impl ClockState {
    /// Start a clock at physical time `t0`.
    pub fn init<R: Rng + ?Sized>(
        params: ClockParams,
        t0: f64,
        rng: &mut R,
    ) -> Result<Self, ClockError> {
        if !t0.is_finite() {
            return Err(ClockError::NonFiniteOrigin(t0));
        }
        params.validate()?;
        let pace = params.pace.initial(rng).max(MIN_PACE);
        Ok(ClockState {
            reading: CompensatedSum::new(params.initial_offset + params.unit_conversion * t0),
            pace,
            step_pace: pace,
            true_time: CompensatedSum::new(t0),
            clamp_events: 0,
            params,
        })
    }

    pub fn params(&self) -> &ClockParams {
        &self.params
    }

    /// Continuous (unquantised) reading.
    pub fn reading(&self) -> f64 {
        self.reading.value()
    }

    pub fn pace(&self) -> f64 {
        self.pace
    }

    /// Mean pace over the last step.
    pub fn step_pace(&self) -> f64 {
        self.step_pace
    }

    pub fn true_time(&self) -> f64 {
        self.true_time.value()
    }

    /// Number of times a drawn pace had to be raised to [`MIN_PACE`].
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Clock offset `C(t) - u t` at the current physical time.
    pub fn offset(&self) -> f64 {
        self.reading() - self.params.unit_conversion * self.true_time()
    }

    /// Reading as reported by the device, rounded half-up to the tick.
    pub fn read(&self) -> f64 {
        quantize(self.reading(), self.params.quantization_tick)
    }

    fn draw_step_pace<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> f64 {
        let next = self.params.pace.step(self.pace, dt, rng);
        let mut mean = match self.params.pace {
            ScalarProcess::Constant { value } => value,
            _ => 0.5 * (self.pace + next),
        };
        if self.params.pace_white_std > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            mean += self.params.pace_white_std * z;
        }
        if mean < MIN_PACE {
            mean = MIN_PACE;
            self.clamp_events += 1;
        }
        self.pace = next.max(MIN_PACE);
        self.step_pace = mean;
        mean
    }

    /// Advance physical time by `dt >= 0`; the reading grows by the mean
    /// pace over the step times `dt`.
    pub fn advance<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) {
        assert!(dt >= 0.0, "clock cannot run backwards (dt = {dt})");
        let mean = self.draw_step_pace(dt, rng);
        self.reading.add(mean * dt);
        self.true_time.add(dt);
    }

    /// Advance until the reading has grown by `delta` local seconds and
    /// return the physical time that elapsed.
    pub fn advance_local<R: Rng + ?Sized>(&mut self, delta: f64, rng: &mut R) -> f64 {
        assert!(delta >= 0.0, "clock cannot run backwards (delta = {delta})");
        let guess = delta / self.pace;
        let mean = self.draw_step_pace(guess, rng);
        let dt = delta / mean;
        self.reading.add(delta);
        self.true_time.add(dt);
        dt
    }

    /// Value-returning form of [`ClockState::advance`].
    pub fn advanced<R: Rng + ?Sized>(mut self, dt: f64, rng: &mut R) -> Self {
        self.advance(dt, rng);
        self
    }
}

/// Round to the nearest multiple of `tick`, ties rounding up; `tick == 0`
/// leaves the value untouched.
pub fn quantize(value: f64, tick: f64) -> f64 {
    if tick <= 0.0 {
        return value;
    }
    let scaled = value / tick;
    let floor = scaled.floor();
    let frac = scaled - floor;
    // representation error in value/tick can push an exact tie either way
    let n = if frac >= 0.5 - 8.0 * f64::EPSILON * scaled.abs().max(1.0) {
        floor + 1.0
    } else {
        floor
    };
    n * tick
}

/// Linear-Gaussian model of the inverse pace for the estimator.
///
/// The inverse pace reuses the transition and noise of the pace process;
/// for stable clocks the mapping error is second order in the skew.
pub fn inverse_pace_model(params: &ClockParams, step: f64) -> LinearBlock {
    let mut block = params
        .pace
        .block(step, params.pace_white_std * params.pace_white_std);
    block.mean = 1.0 / params.pace.nominal();
    block
}
