// SPDX-License-Identifier: Apache-2.0

use serde::Serialize;

use super::filter::FilterCounters;
use super::run::{run_estimation, EstimationRun, RunOptions};
use super::{EstimatorConfig, EstimatorError, Scenario};
use crate::trace::Trace;

/// Jitter std below which a scenario is treated as exact.
pub const EXACT_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitSummary {
    pub unit_id: u32,
    pub is_reference: bool,
    pub events: usize,
    /// Leading events left out of the statistics.
    pub warmup: usize,
    pub prior_jitter_std: Option<f64>,
    pub posterior_jitter_std: Option<f64>,
    pub posterior_jitter_bias: Option<f64>,
    /// Root mean square including the bias; differs from the std when the
    /// error drifts slowly (e.g. an unobservable random-walk delay).
    pub posterior_jitter_rms: Option<f64>,
    /// RMS of the filter's own prior/posterior std over the same window.
    pub predicted_prior_std: f64,
    pub predicted_posterior_std: f64,
    pub nis_mean: Option<f64>,
    pub counters: FilterCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub scenario: u8,
    /// Empirical offset of the system-time frame from physical time: mean
    /// of reference-unit stamp minus true instant.
    pub frame_offset: Option<f64>,
    pub units: Vec<UnitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitComparison {
    pub unit_id: u32,
    pub scenario1_std: Option<f64>,
    pub scenario2_std: Option<f64>,
    /// Scenario-1 over scenario-2 jitter std; absent when either is exact.
    pub reduction_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub units: Vec<UnitComparison>,
    pub scenario1: RunSummary,
    pub scenario2: RunSummary,
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    fn rms(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sum_sq / self.n as f64).sqrt()
        }
    }
}

/// Sample std with the mean removed (two-pass for accuracy).
fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Fill the jitter columns from the trace's ground truth and aggregate
/// per-unit statistics.
pub fn summarize(trace: &Trace, run: &mut EstimationRun, config: &EstimatorConfig) -> RunSummary {
    let frame_offset = trace.truth.as_ref().and_then(|truth| {
        let mut m = Moments::default();
        for (r, g) in trace.records.iter().zip(truth) {
            if r.unit_id == config.reference_unit {
                if let Some(z) = r.central_stamp(config.transmit_weight) {
                    m.push(z - g.true_t);
                }
            }
        }
        m.mean()
    });
    if let (Some(truth), Some(offset)) = (trace.truth.as_ref(), frame_offset) {
        for row in &mut run.rows {
            let target = truth[row.record_index].true_t + offset;
            row.jitter_prior = Some(row.t_prior - target);
            row.jitter_post = Some(row.t_post - target);
        }
    }

    let mut units = Vec::new();
    for (&unit_id, counters) in &run.counters {
        let rows: Vec<_> = run.rows.iter().filter(|r| r.unit_id == unit_id).collect();
        let warmup =
            ((rows.len() as f64) * config.warmup_fraction.clamp(0.0, 1.0)).floor() as usize;
        let window = &rows[warmup.min(rows.len())..];
        let prior: Vec<f64> = window.iter().filter_map(|r| r.jitter_prior).collect();
        let post: Vec<f64> = window.iter().filter_map(|r| r.jitter_post).collect();
        let mut prior_std = Moments::default();
        let mut post_std = Moments::default();
        let mut nis = Moments::default();
        for r in window {
            prior_std.push(r.t_prior_std);
            post_std.push(r.t_post_std);
            if let Some(v) = r.nis {
                nis.push(v);
            }
        }
        let bias = (!post.is_empty()).then(|| post.iter().sum::<f64>() / post.len() as f64);
        let rms = (!post.is_empty())
            .then(|| (post.iter().map(|v| v * v).sum::<f64>() / post.len() as f64).sqrt());
        units.push(UnitSummary {
            unit_id,
            is_reference: unit_id == config.reference_unit,
            events: rows.len(),
            warmup,
            prior_jitter_std: sample_std(&prior),
            posterior_jitter_std: sample_std(&post),
            posterior_jitter_bias: bias,
            posterior_jitter_rms: rms,
            predicted_prior_std: prior_std.rms(),
            predicted_posterior_std: post_std.rms(),
            nis_mean: nis.mean(),
            counters: *counters,
        });
    }
    RunSummary {
        schema_version: trace.meta.schema_version,
        seed: trace.meta.seed,
        config_hash: trace.meta.config_hash.clone(),
        scenario: run.scenario.number(),
        frame_offset,
        units,
    }
}

/// Run both scenarios on one trace and compare posterior jitter.
pub fn compare(
    trace: &Trace,
    config: &EstimatorConfig,
    options: RunOptions,
) -> Result<(EstimationRun, EstimationRun, CompareSummary), EstimatorError> {
    let mut one = run_estimation(&trace.records, Scenario::CentralOnly, config, options)?;
    let mut two = run_estimation(&trace.records, Scenario::WithPeripheral, config, options)?;
    let s1 = summarize(trace, &mut one, config);
    let s2 = summarize(trace, &mut two, config);
    let units = s1
        .units
        .iter()
        .zip(&s2.units)
        .map(|(a, b)| {
            let (x, y) = (a.posterior_jitter_std, b.posterior_jitter_std);
            let reduction_factor = match (x, y) {
                (Some(x), Some(y)) if x > EXACT_JITTER && y > EXACT_JITTER => Some(x / y),
                _ => None,
            };
            UnitComparison {
                unit_id: a.unit_id,
                scenario1_std: x,
                scenario2_std: y,
                reduction_factor,
            }
        })
        .collect();
    let summary = CompareSummary {
        schema_version: trace.meta.schema_version,
        seed: trace.meta.seed,
        config_hash: trace.meta.config_hash.clone(),
        units,
        scenario1: s1,
        scenario2: s2,
    };
    Ok((one, two, summary))
}
