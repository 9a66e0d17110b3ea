// SPDX-License-Identifier: Apache-2.0

use nalgebra::{Matrix4, RowVector4, SymmetricEigen, Vector4};

use super::{EstimatorError, PeriodModel, Scenario, UnitModel};
use crate::trace::{StampRecord, TriggerKind};

/// State slots.
const T: usize = 0;
const A: usize = 1;
const D: usize = 2;
const PER: usize = 3;

const SLOT_NAMES: [&str; 4] = ["t", "inverse_pace", "delay", "period"];

/// Relative size of a negative eigenvalue that counts as a covariance repair.
const PSD_TOLERANCE: f64 = 1e-10;

/// Relative slack on the causal window of command round trips.
const BOUND_SLACK: f64 = 1e-9;

/// Snapshot of one unit's Gaussian timing state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub unit_id: u32,
    pub k: u64,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    /// Which of `[t, inverse_pace, delay, period]` are part of the model.
    pub active: [bool; 4],
}

impl FilterState {
    pub fn t(&self) -> f64 {
        self.mean[T]
    }

    pub fn t_var(&self) -> f64 {
        self.covariance[(T, T)]
    }

    pub fn has_delay(&self) -> bool {
        self.active[D]
    }

    pub fn slot_names() -> [&'static str; 4] {
        SLOT_NAMES
    }
}

/// Result of processing one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub unit_id: u32,
    pub k: u64,
    pub t_prior: f64,
    pub t_prior_var: f64,
    pub t_post: f64,
    pub t_post_var: f64,
    /// Normalised innovation squared of the stamp update, when one happened.
    pub nis: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct FilterCounters {
    pub updates: u64,
    pub rejected: u64,
    pub projections: u64,
    pub psd_repairs: u64,
    /// Records with no timing dynamics available (timing re-derived from the
    /// stamp alone).
    pub resets: u64,
}

#[derive(Debug, Clone)]
pub struct UnitFilter {
    unit_id: u32,
    scenario: Scenario,
    is_reference: bool,
    model: UnitModel,
    transmit_weight: f64,
    reference_delay: Option<f64>,
    x: Vector4<f64>,
    p: Matrix4<f64>,
    active: [bool; 4],
    initialized: bool,
    last_z: f64,
    last_gamma_p: Option<f64>,
    last_k: u64,
    prior: Option<FilterState>,
    posterior: Option<FilterState>,
    counters: FilterCounters,
}

impl UnitFilter {
    pub fn new(
        model: UnitModel,
        scenario: Scenario,
        is_reference: bool,
        transmit_weight: f64,
        reference_delay: Option<f64>,
    ) -> Self {
        let active = match scenario {
            Scenario::CentralOnly => [true, false, !is_reference, false],
            Scenario::WithPeripheral => [true, true, !is_reference, false],
        };
        UnitFilter {
            unit_id: model.unit_id,
            scenario,
            is_reference,
            model,
            transmit_weight,
            reference_delay,
            x: Vector4::zeros(),
            p: Matrix4::zeros(),
            active,
            initialized: false,
            last_z: 0.0,
            last_gamma_p: None,
            last_k: 0,
            prior: None,
            posterior: None,
            counters: FilterCounters::default(),
        }
    }

    pub fn unit_id(&self) -> u32 {
        self.unit_id
    }

    pub fn is_reference(&self) -> bool {
        self.is_reference
    }

    pub fn counters(&self) -> FilterCounters {
        self.counters
    }

    pub fn prior(&self) -> Option<&FilterState> {
        self.prior.as_ref()
    }

    pub fn posterior(&self) -> Option<&FilterState> {
        self.posterior.as_ref()
    }

    /// Current state (posterior after the last processed record).
    pub fn state(&self, k: u64) -> FilterState {
        FilterState {
            unit_id: self.unit_id,
            k,
            mean: self.x,
            covariance: self.p,
            active: self.active,
        }
    }

    fn measurement_var(&self) -> f64 {
        self.model.residual_std * self.model.residual_std
    }

    fn delay_prior(&self) -> (f64, f64) {
        (self.model.delay.nominal(), self.model.delay_prior_std)
    }

    /// Process one record in the filter's scenario.
    pub fn process(&mut self, record: &StampRecord) -> Result<StepOutput, EstimatorError> {
        match self.scenario {
            Scenario::CentralOnly => self.scenario1_estimate(record),
            Scenario::WithPeripheral => self.scenario2_step(record),
        }
    }

    fn central_stamp(&self, record: &StampRecord) -> Result<f64, EstimatorError> {
        record
            .central_stamp(self.transmit_weight)
            .ok_or(EstimatorError::MissingCentralStamp {
                unit_id: record.unit_id,
                k: record.k,
            })
    }

    /// Timing estimate from the central stamp alone: `t = z - delay`.
    pub fn scenario1_estimate(
        &mut self,
        record: &StampRecord,
    ) -> Result<StepOutput, EstimatorError> {
        let z = self.central_stamp(record)?;
        if !self.initialized {
            let (mean, std) = self.delay_prior();
            self.x[D] = if self.active[D] { mean } else { 0.0 };
            self.p[(D, D)] = if self.active[D] { std * std } else { 0.0 };
            self.initialized = true;
        } else if self.active[D] {
            let step = (z - self.last_z).max(0.0);
            let block = self.model.delay.block(step, 0.0);
            self.x[D] = block.transition * self.x[D] + (1.0 - block.transition) * block.mean;
            self.p[(D, D)] =
                block.transition * block.transition * self.p[(D, D)] + block.process_var;
        }
        self.set_timing_from_stamp(z);
        self.project(record);
        self.last_z = z;
        self.last_k = record.k;
        let snap = self.state(record.k);
        self.prior = Some(snap.clone());
        self.posterior = Some(snap);
        Ok(StepOutput {
            unit_id: self.unit_id,
            k: record.k,
            t_prior: self.x[T],
            t_prior_var: self.p[(T, T)],
            t_post: self.x[T],
            t_post_var: self.p[(T, T)],
            nis: None,
        })
    }

    /// `t = z - delay` with the matching covariance row.
    fn set_timing_from_stamp(&mut self, z: f64) {
        let r = self.measurement_var();
        for j in 0..4 {
            let c = if self.active[D] && j != T {
                -self.p[(D, j)]
            } else {
                0.0
            };
            self.p[(T, j)] = c;
            self.p[(j, T)] = c;
        }
        if self.active[D] {
            self.x[T] = z - self.x[D];
            self.p[(T, T)] = self.p[(D, D)] + r;
        } else {
            self.x[T] = z;
            self.p[(T, T)] = r;
        }
    }

    fn initialize_scenario2(&mut self, z: f64) {
        self.x = Vector4::zeros();
        self.p = Matrix4::zeros();
        let (mean, std) = self.delay_prior();
        if self.active[D] {
            self.x[D] = mean;
            self.p[(D, D)] = std * std;
        }
        self.x[A] = 1.0 / self.model.pace.nominal();
        self.p[(A, A)] = self.model.inverse_pace_prior_std.powi(2);
        self.set_timing_from_stamp(z);
        self.initialized = true;
    }

    fn scenario2_step(&mut self, record: &StampRecord) -> Result<StepOutput, EstimatorError> {
        let z = self.central_stamp(record)?;
        if !self.initialized {
            self.initialize_scenario2(z);
            self.project(record);
            let snap = self.state(record.k);
            self.prior = Some(snap.clone());
            self.posterior = Some(snap);
            self.last_z = z;
            self.last_gamma_p = record.gamma_p;
            self.last_k = record.k;
            return Ok(StepOutput {
                unit_id: self.unit_id,
                k: record.k,
                t_prior: self.x[T],
                t_prior_var: self.p[(T, T)],
                t_post: self.x[T],
                t_post_var: self.p[(T, T)],
                nis: None,
            });
        }

        let step = (z - self.last_z).max(0.0);
        let periods = record.k.saturating_sub(self.last_k).max(1) as f64;
        let peripheral = match (record.gamma_p, self.last_gamma_p) {
            (Some(now), Some(before)) => Some(now - before),
            _ => None,
        };

        let mut updated = true;
        if let Some(d) = peripheral {
            if d <= 0.0 || !d.is_finite() {
                self.counters.rejected += 1;
                log::warn!(
                    "unit {}: rejecting record k={} with non-increasing peripheral stamp (interval {d})",
                    self.unit_id,
                    record.k
                );
                return Err(EstimatorError::NonMonotonePeripheral {
                    unit_id: self.unit_id,
                    k: record.k,
                    d,
                });
            }
            let q = self.model.stamp_noise_std;
            self.scenario2_predict(d, 2.0 * q * q, step);
        } else if record.trigger == TriggerKind::Time && self.model.period != PeriodModel::None {
            let jitter_var = periods * self.model.period_jitter_std.powi(2);
            match self.model.period {
                PeriodModel::Known { period } => {
                    self.scenario2_predict(period * periods, jitter_var, step)
                }
                PeriodModel::Unknown { prior_std } => {
                    if !self.active[PER] {
                        self.activate_period(z, periods, prior_std);
                    }
                    self.predict_inner(None, periods, jitter_var, step);
                }
                PeriodModel::None => unreachable!(),
            }
        } else {
            self.reset_from_stamp(z, step);
            updated = false;
        }
        let prior = self.state(record.k);
        let (t_prior, t_prior_var) = (prior.t(), prior.t_var());
        self.prior = Some(prior);

        let nis = if updated {
            self.scenario2_update(record)?
        } else {
            self.project(record);
            None
        };
        self.posterior = Some(self.state(record.k));
        self.last_z = z;
        self.last_gamma_p = record.gamma_p;
        self.last_k = record.k;
        Ok(StepOutput {
            unit_id: self.unit_id,
            k: record.k,
            t_prior,
            t_prior_var,
            t_post: self.x[T],
            t_post_var: self.p[(T, T)],
            nis,
        })
    }

    fn activate_period(&mut self, z: f64, periods: f64, prior_std: Option<f64>) {
        let d = (z - self.last_z) / (self.x[A] * periods);
        let default_std = (10.0 * std::f64::consts::SQRT_2 * self.model.residual_std / periods)
            .max(1e-6 * d.abs());
        let std = prior_std.unwrap_or(default_std);
        self.active[PER] = true;
        self.x[PER] = d;
        for j in 0..4 {
            self.p[(PER, j)] = 0.0;
            self.p[(j, PER)] = 0.0;
        }
        self.p[(PER, PER)] = std * std;
    }

    /// Time update across one observed local interval `d_obs`: the timing
    /// advances by `inverse_pace * d_obs` and the pace and delay states follow
    /// their dynamic blocks over `step` seconds. `interval_var` is the
    /// variance of the interval error.
    pub fn scenario2_predict(&mut self, d_obs: f64, interval_var: f64, step: f64) {
        self.predict_inner(Some(d_obs), 1.0, interval_var, step);
    }

    fn predict_inner(&mut self, d_obs: Option<f64>, periods: f64, interval_var: f64, step: f64) {
        let white = self.model.pace_white_std * self.model.pace_white_std;
        let pace = self.model.pace.block(step, white);
        let pace_mean = 1.0 / self.model.pace.nominal();
        let a = self.x[A];
        let d = d_obs.unwrap_or(periods * self.x[PER]);

        let mut f = Matrix4::identity();
        f[(T, A)] = d;
        if d_obs.is_none() {
            f[(T, PER)] = periods * a;
        }
        f[(A, A)] = pace.transition;
        let mut x = self.x;
        x[T] = self.x[T] + a * d;
        x[A] = pace.transition * a + (1.0 - pace.transition) * pace_mean;

        let mut q = Matrix4::zeros();
        q[(T, T)] = interval_var * a * a + d * d * white;
        q[(A, A)] = pace.process_var;
        if self.active[D] {
            let delay = self.model.delay.block(step, 0.0);
            f[(D, D)] = delay.transition;
            x[D] = delay.transition * self.x[D] + (1.0 - delay.transition) * delay.mean;
            q[(D, D)] = delay.process_var;
        }
        self.x = x;
        self.p = f * self.p * f.transpose() + q;
        self.repair_covariance();
    }

    /// No timing dynamics for this record: propagate pace and delay, then
    /// re-derive the timing from the stamp alone.
    fn reset_from_stamp(&mut self, z: f64, step: f64) {
        let white = self.model.pace_white_std * self.model.pace_white_std;
        let pace = self.model.pace.block(step, white);
        let pace_mean = 1.0 / self.model.pace.nominal();
        let mut f = Matrix4::identity();
        f[(A, A)] = pace.transition;
        let mut q = Matrix4::zeros();
        q[(A, A)] = pace.process_var;
        self.x[A] = pace.transition * self.x[A] + (1.0 - pace.transition) * pace_mean;
        if self.active[D] {
            let delay = self.model.delay.block(step, 0.0);
            f[(D, D)] = delay.transition;
            self.x[D] = delay.transition * self.x[D] + (1.0 - delay.transition) * delay.mean;
            q[(D, D)] = delay.process_var;
        }
        self.p = f * self.p * f.transpose() + q;
        self.set_timing_from_stamp(z);
        self.repair_covariance();
        self.counters.resets += 1;
    }

    /// Measurement update with the record's (mean) central stamp,
    /// `z = t + delay + v`. Returns the normalised innovation squared.
    pub fn scenario2_update(
        &mut self,
        record: &StampRecord,
    ) -> Result<Option<f64>, EstimatorError> {
        let z = self.central_stamp(record)?;
        let r = self.measurement_var();
        let mut h = RowVector4::zeros();
        h[T] = 1.0;
        if self.active[D] {
            h[D] = 1.0;
        }
        let s = (h * self.p * h.transpose())[(0, 0)] + r;
        let nis = if s > 0.0 {
            let gain = self.p * h.transpose() / s;
            let innovation = z - (h * self.x)[(0, 0)];
            self.x += gain * innovation;
            let ikh = Matrix4::identity() - gain * h;
            self.p = ikh * self.p * ikh.transpose() + gain * r * gain.transpose();
            self.repair_covariance();
            self.counters.updates += 1;
            Some(innovation * innovation / s)
        } else {
            None
        };
        self.project(record);
        Ok(nis)
    }

    /// Project the timing mean onto the window allowed by causality of the
    /// record's stamps; the covariance is left as is.
    fn project(&mut self, record: &StampRecord) {
        let Some(rd) = self.reference_delay else {
            return;
        };
        if self.is_reference {
            return;
        }
        let (lower, upper) = match (record.gamma_c_tx, record.gamma_c_rx) {
            (Some(tx), Some(rx)) => {
                let slack = BOUND_SLACK * 0.5 * (rx - tx).abs();
                (tx + rd - slack, rx + rd + slack)
            }
            (None, Some(rx)) => (f64::NEG_INFINITY, rx + rd),
            (Some(tx), None) => (tx + rd, f64::INFINITY),
            (None, None) => return,
        };
        let t = self.x[T];
        let clamped = t.clamp(lower, upper);
        if clamped != t {
            self.x[T] = clamped;
            self.counters.projections += 1;
        }
    }

    fn repair_covariance(&mut self) {
        self.p = (self.p + self.p.transpose()) * 0.5;
        let eig = SymmetricEigen::new(self.p);
        let scale = eig.eigenvalues.amax();
        let min = eig.eigenvalues.min();
        if min < 0.0 {
            if min < -PSD_TOLERANCE * scale {
                self.counters.psd_repairs += 1;
            }
            let clamped = eig.eigenvalues.map(|v| v.max(0.0));
            self.p =
                eig.eigenvectors * Matrix4::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            self.p = (self.p + self.p.transpose()) * 0.5;
        }
    }
}
