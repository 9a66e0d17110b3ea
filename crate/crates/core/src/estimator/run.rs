// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::filter::{FilterCounters, FilterState, StepOutput, UnitFilter};
use super::{EstimatorConfig, EstimatorError, Scenario};
use crate::trace::{fmt_time, write_meta_line, StampRecord, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Run the per-unit filters on the rayon pool.
    pub parallel: bool,
    /// Keep prior/posterior snapshots for every record.
    pub keep_history: bool,
}

/// Estimates for one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    /// Position of the record in the input trace.
    pub record_index: usize,
    pub unit_id: u32,
    pub k: u64,
    pub t_prior: f64,
    pub t_prior_std: f64,
    pub t_post: f64,
    pub t_post_std: f64,
    pub nis: Option<f64>,
    pub jitter_prior: Option<f64>,
    pub jitter_post: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun {
    pub scenario: Scenario,
    /// One row per accepted record, in trace order.
    pub rows: Vec<EstimateRow>,
    pub counters: BTreeMap<u32, FilterCounters>,
    /// Per-unit (prior, posterior) snapshots when requested.
    pub history: BTreeMap<u32, Vec<(FilterState, FilterState)>>,
}

struct UnitResult {
    unit_id: u32,
    steps: Vec<(usize, StepOutput)>,
    counters: FilterCounters,
    history: Vec<(FilterState, FilterState)>,
}

fn run_unit(
    unit_id: u32,
    indices: &[usize],
    records: &[StampRecord],
    scenario: Scenario,
    config: &EstimatorConfig,
    keep_history: bool,
) -> Result<UnitResult, EstimatorError> {
    let model = config
        .unit(unit_id)
        .cloned()
        .ok_or(EstimatorError::UnknownUnit(unit_id))?;
    let mut filter = UnitFilter::new(
        model,
        scenario,
        unit_id == config.reference_unit,
        config.transmit_weight,
        config.reference_delay,
    );
    let mut steps = Vec::with_capacity(indices.len());
    let mut history = Vec::new();
    for &i in indices {
        match filter.process(&records[i]) {
            Ok(out) => {
                steps.push((i, out));
                if keep_history {
                    if let (Some(p), Some(q)) = (filter.prior(), filter.posterior()) {
                        history.push((p.clone(), q.clone()));
                    }
                }
            }
            Err(EstimatorError::NonMonotonePeripheral { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(UnitResult {
        unit_id,
        steps,
        counters: filter.counters(),
        history,
    })
}

/// Run one independent filter per unit over records delivered in arrival
/// order. Parallel and serial execution give identical results.
pub fn run_estimation(
    records: &[StampRecord],
    scenario: Scenario,
    config: &EstimatorConfig,
    options: RunOptions,
) -> Result<EstimationRun, EstimatorError> {
    if config.unit(config.reference_unit).is_none() {
        return Err(EstimatorError::MissingReference(config.reference_unit));
    }
    if !(0.0..=1.0).contains(&config.transmit_weight) {
        return Err(EstimatorError::Config(format!(
            "transmit_weight must lie in [0, 1], got {}",
            config.transmit_weight
        )));
    }
    let mut by_unit: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut last_k: BTreeMap<u32, u64> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if config.unit(r.unit_id).is_none() {
            return Err(EstimatorError::UnknownUnit(r.unit_id));
        }
        if let Some(&previous) = last_k.get(&r.unit_id) {
            if r.k <= previous {
                return Err(EstimatorError::OutOfOrder {
                    unit_id: r.unit_id,
                    k: r.k,
                    previous,
                });
            }
        }
        last_k.insert(r.unit_id, r.k);
        by_unit.entry(r.unit_id).or_default().push(i);
    }

    let groups: Vec<(u32, Vec<usize>)> = by_unit.into_iter().collect();
    let run = |(unit_id, idx): &(u32, Vec<usize>)| {
        run_unit(
            *unit_id,
            idx,
            records,
            scenario,
            config,
            options.keep_history,
        )
    };
    let results: Vec<UnitResult> = if options.parallel {
        groups.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        groups.iter().map(run).collect::<Result<_, _>>()?
    };

    let mut rows = Vec::with_capacity(records.len());
    let mut counters = BTreeMap::new();
    let mut history = BTreeMap::new();
    for res in results {
        counters.insert(res.unit_id, res.counters);
        if options.keep_history {
            history.insert(res.unit_id, res.history);
        }
        rows.extend(res.steps.into_iter().map(|(i, s)| EstimateRow {
            record_index: i,
            unit_id: s.unit_id,
            k: s.k,
            t_prior: s.t_prior,
            t_prior_std: s.t_prior_var.max(0.0).sqrt(),
            t_post: s.t_post,
            t_post_std: s.t_post_var.max(0.0).sqrt(),
            nis: s.nis,
            jitter_prior: None,
            jitter_post: None,
        }));
    }
    rows.sort_by_key(|r| r.record_index);
    Ok(EstimationRun {
        scenario,
        rows,
        counters,
        history,
    })
}

pub const ESTIMATE_COLUMNS: [&str; 9] = [
    "unit_id",
    "k",
    "scenario",
    "t_prior",
    "t_prior_std",
    "t_post",
    "t_post_std",
    "jitter_prior",
    "jitter_post",
];

/// Write estimates as CSV preceded by a `#meta` line.
pub fn write_estimates<W: Write, M: Serialize>(
    out: W,
    meta: &M,
    run: &EstimationRun,
) -> Result<(), TraceError> {
    let mut out = std::io::BufWriter::new(out);
    write_meta_line(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| TraceError::Io(std::io::Error::other(e));
    w.write_record(ESTIMATE_COLUMNS).map_err(io)?;
    let opt = |v: Option<f64>| v.map(fmt_time).unwrap_or_default();
    for r in &run.rows {
        w.write_record([
            r.unit_id.to_string(),
            r.k.to_string(),
            run.scenario.number().to_string(),
            fmt_time(r.t_prior),
            fmt_time(r.t_prior_std),
            fmt_time(r.t_post),
            fmt_time(r.t_post_std),
            opt(r.jitter_prior),
            opt(r.jitter_post),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
