// SPDX-License-Identifier: Apache-2.0

//! Scalar stochastic processes shared by the clock-pace and delay-state models.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A scalar process evolved in continuous time and sampled at event instants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarProcess {
    /// Fixed value.
    Constant { value: f64 },
    /// Brownian motion started at `initial`, diffusion `sigma_walk` per square-root second.
    RandomWalk { initial: f64, sigma_walk: f64 },
    /// First-order Gauss-Markov (Ornstein-Uhlenbeck) process around `mean`.
    GaussMarkov {
        mean: f64,
        tau: f64,
        stationary_std: f64,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProcessError {
    #[error("correlation time must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("noise standard deviation must be non-negative and finite, got {0}")]
    InvalidStd(f64),
    #[error("process value must be finite, got {0}")]
    NonFinite(f64),
}

/// Linear-Gaussian transition for one scalar state over a fixed step:
/// `x' = transition * x + (1 - transition) * mean + w`, `w ~ N(0, process_var)`.
///
/// `white_var` is the variance of the white perturbation that rides on top of
/// the state at each sample without entering its dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBlock {
    pub transition: f64,
    pub process_var: f64,
    pub white_var: f64,
    pub mean: f64,
}

impl LinearBlock {
    /// Variance the state settles at under repeated steps, infinite for a
    /// driven random walk.
    pub fn stationary_var(&self) -> f64 {
        let decay = 1.0 - self.transition * self.transition;
        if decay <= 0.0 {
            if self.process_var == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.process_var / decay
        }
    }
}

fn check_std(s: f64) -> Result<(), ProcessError> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(ProcessError::InvalidStd(s))
    }
}

fn check_finite(v: f64) -> Result<(), ProcessError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ProcessError::NonFinite(v))
    }
}

impl ScalarProcess {
    pub fn validate(&self) -> Result<(), ProcessError> {
        match *self {
            ScalarProcess::Constant { value } => check_finite(value),
            ScalarProcess::RandomWalk {
                initial,
                sigma_walk,
            } => {
                check_finite(initial)?;
                check_std(sigma_walk)
            }
            ScalarProcess::GaussMarkov {
                mean,
                tau,
                stationary_std,
            } => {
                check_finite(mean)?;
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(ProcessError::NonPositiveTau(tau));
                }
                check_std(stationary_std)
            }
        }
    }

    /// Long-run centre of the process (the initial value for a random walk).
    pub fn nominal(&self) -> f64 {
        match *self {
            ScalarProcess::Constant { value } => value,
            ScalarProcess::RandomWalk { initial, .. } => initial,
            ScalarProcess::GaussMarkov { mean, .. } => mean,
        }
    }

    /// Initial sample; Gauss-Markov processes start in their stationary law.
    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarProcess::Constant { value } => value,
            ScalarProcess::RandomWalk { initial, .. } => initial,
            ScalarProcess::GaussMarkov {
                mean,
                stationary_std,
                ..
            } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + stationary_std * z
            }
        }
    }

    /// Exact transition of the process over `dt` seconds.
    pub fn step<R: Rng + ?Sized>(&self, current: f64, dt: f64, rng: &mut R) -> f64 {
        debug_assert!(dt >= 0.0);
        match *self {
            ScalarProcess::Constant { value } => value,
            ScalarProcess::RandomWalk { sigma_walk, .. } => {
                if sigma_walk == 0.0 || dt == 0.0 {
                    return current;
                }
                let z: f64 = rng.sample(StandardNormal);
                current + sigma_walk * dt.sqrt() * z
            }
            ScalarProcess::GaussMarkov {
                mean,
                tau,
                stationary_std,
            } => {
                let phi = (-dt / tau).exp();
                let z: f64 = rng.sample(StandardNormal);
                mean + phi * (current - mean) + stationary_std * (1.0 - phi * phi).sqrt() * z
            }
        }
    }

    /// Discretisation of the process over a step of length `step` seconds.
    pub fn block(&self, step: f64, white_var: f64) -> LinearBlock {
        match *self {
            ScalarProcess::Constant { value } => LinearBlock {
                transition: 1.0,
                process_var: 0.0,
                white_var,
                mean: value,
            },
            ScalarProcess::RandomWalk {
                initial,
                sigma_walk,
            } => LinearBlock {
                transition: 1.0,
                process_var: sigma_walk * sigma_walk * step,
                white_var,
                mean: initial,
            },
            ScalarProcess::GaussMarkov {
                mean,
                tau,
                stationary_std,
            } => {
                let phi = (-step / tau).exp();
                LinearBlock {
                    transition: phi,
                    process_var: stationary_std * stationary_std * (1.0 - phi * phi),
                    white_var,
                    mean,
                }
            }
        }
    }
}
