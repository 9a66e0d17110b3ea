// SPDX-License-Identifier: Apache-2.0

//! `timerec`: simulate time-stamp traces, estimate timing, and report the
//! steady-state jitter analysis.

mod report;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use timerec_core::config::{ConfigError, ExperimentConfig};
use timerec_core::estimator::{
    compare, run_estimation, summarize, write_estimates, EstimatorConfig, EstimatorError,
    RunOptions, Scenario,
};
use timerec_core::steady_state::{
    example_report, jitter_budget, Interpretation, SteadyStateError, EXAMPLE_PAN_RATE,
    EXAMPLE_RESOLUTION, EXAMPLE_SIGMA_ALPHA, EXAMPLE_SIGMA_DELTA,
};
use timerec_core::trace::{Trace, TraceError, TRACE_SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "timerec",
    version,
    about = "Timing recovery without clock synchronization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an experiment configuration into a trace file.
    Simulate {
        config: PathBuf,
        /// Override the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate timing for every record of a trace.
    Estimate {
        trace: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scenario: u8,
        /// Estimates CSV.
        #[arg(long)]
        out: PathBuf,
        /// Summary JSON; defaults to the estimates path with a
        /// `.summary.json` extension.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Take the estimator model from this configuration instead of the
        /// trace header.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run both scenarios on one trace and report the jitter reduction.
    Compare {
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Steady-state jitter budget for the reduced model.
    Riccati {
        #[arg(long)]
        sigma_delta: f64,
        #[arg(long)]
        sigma_alpha: f64,
        #[arg(long, default_value_t = Interpretation::VarianceConsistent)]
        interpretation: Interpretation,
    },
    /// Camera/IMU numerical example.
    Example {
        #[arg(long, default_value_t = EXAMPLE_SIGMA_DELTA)]
        sigma_delta: f64,
        #[arg(long, default_value_t = EXAMPLE_SIGMA_ALPHA)]
        sigma_alpha: f64,
        /// Camera pan rate, degrees per second.
        #[arg(long, default_value_t = EXAMPLE_PAN_RATE)]
        pan_rate: f64,
        /// Angular resolution, pixels per degree.
        #[arg(long, default_value_t = EXAMPLE_RESOLUTION)]
        resolution: f64,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn trace_error(path: &Path, e: TraceError) -> CliError {
    let msg = format!("{}: {e}", path.display());
    match e {
        TraceError::Io(_) => CliError::Runtime(msg),
        _ => CliError::Config(msg),
    }
}

fn estimator_error(e: EstimatorError) -> CliError {
    match e {
        EstimatorError::UnknownUnit(_)
        | EstimatorError::MissingReference(_)
        | EstimatorError::Config(_) => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

fn steady_error(e: SteadyStateError) -> CliError {
    match e {
        SteadyStateError::NotConverged { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = create(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Result<Trace, CliError> {
    Trace::read_path(path).map_err(|e| trace_error(path, e))
}

/// Estimator model from `--config` when given, else from the trace header.
fn estimator_for(trace: &Trace, config: Option<&Path>) -> Result<EstimatorConfig, CliError> {
    if let Some(path) = config {
        return Ok(ExperimentConfig::from_path(path)?.estimator_config());
    }
    trace.meta.estimator.clone().ok_or_else(|| {
        CliError::Config(
            "trace header carries no estimator model; pass --config with the experiment configuration"
                .into(),
        )
    })
}

#[derive(Serialize)]
struct EstimateMeta<'a> {
    schema_version: u32,
    seed: u64,
    config_hash: &'a str,
    scenario: u8,
}

fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let sim = cfg.simulate(seed)?;
            let d = sim.diagnostics;
            log::info!(
                "{} records; {} pace clamps, {} delay rejections, {} FIFO holds",
                sim.trace.len(),
                d.pace_clamps,
                d.delay_rejections,
                d.fifo_holds
            );
            sim.trace
                .write_path(&out)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
        }
        Command::Estimate {
            trace,
            scenario,
            out,
            summary,
            config,
        } => {
            let scenario = Scenario::try_from(scenario).map_err(CliError::Config)?;
            let t = load_trace(&trace)?;
            let est = estimator_for(&t, config.as_deref())?;
            let mut run = run_estimation(
                &t.records,
                scenario,
                &est,
                RunOptions {
                    parallel: true,
                    keep_history: false,
                },
            )
            .map_err(estimator_error)?;
            let s = summarize(&t, &mut run, &est);
            let meta = EstimateMeta {
                schema_version: TRACE_SCHEMA_VERSION,
                seed: t.meta.seed,
                config_hash: &t.meta.config_hash,
                scenario: scenario.number(),
            };
            write_estimates(create(&out)?, &meta, &run)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
            write_json(&summary.unwrap_or_else(|| summary_path(&out)), &s)
        }
        Command::Compare { trace, out, config } => {
            let t = load_trace(&trace)?;
            let est = estimator_for(&t, config.as_deref())?;
            let (_, _, summary) = compare(
                &t,
                &est,
                RunOptions {
                    parallel: true,
                    keep_history: false,
                },
            )
            .map_err(estimator_error)?;
            write_json(&out, &summary)
        }
        Command::Riccati {
            sigma_delta,
            sigma_alpha,
            interpretation,
        } => {
            let b =
                jitter_budget(sigma_delta, sigma_alpha, interpretation).map_err(steady_error)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&b).expect("serializable")
            );
            Ok(())
        }
        Command::Example {
            sigma_delta,
            sigma_alpha,
            pan_rate,
            resolution,
            json,
        } => {
            let r = example_report(sigma_delta, sigma_alpha, pan_rate, resolution)
                .map_err(steady_error)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&r).expect("serializable")
                );
            } else {
                print!("{}", report::example_table(&r));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
