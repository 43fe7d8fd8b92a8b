//! Config-driven sweeps, validation runs and report files.

mod commands;
mod config;
mod report;

pub use commands::{
    analytic_report, train_agents, validate, write_analytic, write_training, write_validation,
    AnalyticReport, TrainReport, ValidationRow,
};
pub use config::{
    load_config, ConfigError, EvaluationConfig, ExperimentConfig, FormulaMode, LoadedConfig,
    Method, SweepConfig, SweepParameter, SystemConfig, ValidationConfig,
};
pub use report::{
    aggregate, emit_report, load_run_dir, ordering_checks, trend_violations, write_result_csv,
    OrderingCheck, ResultRow, CSV_HEADER,
};

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{evaluate, train, AgentError, Policy};
use crate::analytics::system_aoi;
use crate::env::OffloadEnv;
use crate::net::Head;
use crate::quadrature::QuadratureSettings;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("no result rows to report")]
    NoRows,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Analytics(#[from] crate::analytics::AnalyticsError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Outcome of one (sweep point, method, seed) job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub spec_hash: String,
    pub parameter: String,
    pub sweep_value: f64,
    pub method: Method,
    /// `None` for the seed-free analytic method.
    pub seed: Option<u64>,
    /// Per-source mean age in seconds.
    pub mean_aoi: Option<f64>,
    /// `mean_aoi / T`; analytic rows only.
    pub normalized_aoi: Option<f64>,
    pub error: Option<String>,
}

/// Per-episode training trace of one learned run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub sweep_value: f64,
    pub method: Method,
    pub seed: u64,
    pub episode_aoi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub sweep_value: f64,
    pub method: Method,
    pub seed: Option<u64>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<RunRow>,
    pub curves: Vec<Curve>,
    pub timings: Vec<Timing>,
}

struct Job {
    value: f64,
    method: Method,
    seed: Option<u64>,
}

fn sweep_points(cfg: &ExperimentConfig) -> (String, Vec<f64>) {
    match &cfg.sweep {
        Some(s) => (s.parameter.name().to_string(), s.values.clone()),
        None => ("base".to_string(), vec![0.0]),
    }
}

fn point_system(cfg: &ExperimentConfig, value: f64) -> Result<SystemConfig, ConfigError> {
    match &cfg.sweep {
        Some(s) => s.parameter.apply(&cfg.system, value),
        None => Ok(cfg.system.clone()),
    }
}

fn run_job(cfg: &ExperimentConfig, job: &Job) -> (RunRow, Option<Curve>) {
    let hash = cfg.spec_hash();
    let (parameter, _) = sweep_points(cfg);
    let mut row = RunRow {
        spec_hash: hash,
        parameter,
        sweep_value: job.value,
        method: job.method,
        seed: job.seed,
        mean_aoi: None,
        normalized_aoi: None,
        error: None,
    };
    let mut curve = None;
    let result = (|| -> Result<(), HarnessError> {
        let system = point_system(cfg, job.value)?;
        if job.method == Method::Analytic {
            let model = system.build()?;
            let a = system_aoi(&model, system.slots, &QuadratureSettings::default(), cfg.formulas())?;
            row.mean_aoi = Some(a.raw);
            row.normalized_aoi = Some(a.normalized);
            return Ok(());
        }
        let seed = job.seed.expect("simulated jobs carry a seed");
        let mut env = OffloadEnv::new(cfg.env_config(&system)?)
            .map_err(AgentError::from)?;
        let episodes = cfg.evaluation.episodes;
        let eval = match job.method {
            Method::Dueling | Method::Plain => {
                let head = if job.method == Method::Dueling { Head::Dueling } else { Head::Plain };
                let agent_cfg = crate::agent::TrainConfig {
                    steps_per_episode: system.slots,
                    ..cfg.agent.clone()
                };
                let trained = train(&mut env, &agent_cfg, head, seed)?;
                curve = Some(Curve {
                    sweep_value: job.value,
                    method: job.method,
                    seed,
                    episode_aoi: trained.log.episodes.iter().map(|e| e.mean_aoi).collect(),
                });
                evaluate(&mut env, &Policy::Greedy(&trained.params), episodes, seed)?
            }
            Method::Random => evaluate(&mut env, &Policy::Random, episodes, seed)?,
            Method::Analytic => unreachable!(),
        };
        row.mean_aoi = Some(eval.mean_aoi);
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    (row, curve)
}

/// Runs every sweep point, method and seed. Failures are kept as rows
/// carrying an error message; the sweep itself only fails on setup errors.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepOutput, HarnessError> {
    cfg.validate()?;
    let (_, values) = sweep_points(cfg);
    let seeds = cfg.run_seeds();
    let mut jobs = Vec::new();
    for &value in &values {
        for &method in &cfg.methods {
            if method == Method::Analytic {
                jobs.push(Job { value, method, seed: None });
            } else {
                jobs.extend(seeds.iter().map(|&s| Job { value, method, seed: Some(s) }));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let results: Vec<(RunRow, Option<Curve>, Timing)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let start = Instant::now();
                let (row, curve) = run_job(cfg, job);
                let timing = Timing {
                    sweep_value: job.value,
                    method: job.method,
                    seed: job.seed,
                    runtime_s: start.elapsed().as_secs_f64(),
                };
                (row, curve, timing)
            })
            .collect()
    });
    let mut out = SweepOutput::default();
    for (row, curve, timing) in results {
        out.rows.push(row);
        out.curves.extend(curve);
        out.timings.push(timing);
    }
    Ok(out)
}

/// Report files plus `timings.jsonl` for a finished sweep.
pub fn write_sweep(cfg: &ExperimentConfig, out: &SweepOutput, dir: &std::path::Path) -> Result<String, HarnessError> {
    let summary = emit_report(cfg, &out.rows, &out.curves, dir)?;
    report::write_timings(dir, &out.timings)?;
    Ok(summary)
}
