use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Method};
use crate::agent::{evaluate, train, Evaluation, Policy, Trained, TrainConfig};
use crate::analytics::{
    aoi_breakdown, check_feasibility, processing_queue_wait, system_aoi, transmission_queue_wait,
    transmission_times, transmission_wait_exact, AoiBreakdown, ConstraintCheck, ProcessingWaitForm,
    SystemAoi, TransmissionWaitForm,
};
use crate::channel::{expected_tx_time, sample_tx_time};
use crate::des::{self, Horizon, SimConfig};
use crate::env::OffloadEnv;
use crate::harness::ExperimentConfig;
use crate::net::Head;
use crate::quadrature::QuadratureSettings;
use crate::seed::{self, streams};

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub slots: u32,
    pub breakdown: AoiBreakdown,
    pub system: SystemAoi,
    pub constraints: Vec<ConstraintCheck>,
}

/// Closed-form decomposition of the base scenario.
pub fn analytic_report(cfg: &ExperimentConfig) -> Result<AnalyticReport, HarnessError> {
    let m = cfg.system.build()?;
    let quad = QuadratureSettings::default();
    let constraints = check_feasibility(&m, &quad)?;
    let breakdown = aoi_breakdown(&m, &quad, cfg.formulas())?;
    let system = system_aoi(&m, cfg.system.slots, &quad, cfg.formulas())?;
    Ok(AnalyticReport {
        slots: cfg.system.slots,
        breakdown,
        system,
        constraints,
    })
}

pub fn write_analytic(report: &AnalyticReport, dir: &Path) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    let mut rows: Vec<Vec<String>> = report
        .breakdown
        .sources
        .iter()
        .enumerate()
        .map(|(j, s)| {
            std::iter::once(j.to_string())
                .chain(s.components().iter().map(f64::to_string))
                .chain(std::iter::once(s.total.to_string()))
                .collect()
        })
        .collect();
    rows.push(vec![
        "mean".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        report.system.raw.to_string(),
    ]);
    rows.push(vec![
        format!("normalized_T{}", report.slots),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        report.system.normalized.to_string(),
    ]);
    write_table(
        &dir.join("analytic.csv"),
        &[
            "source",
            "inter_arrival_s",
            "edge_service_s",
            "processing_wait_s",
            "uplink_time_s",
            "downlink_time_s",
            "transmission_wait_s",
            "total_s",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .constraints
        .iter()
        .map(|c| vec![c.constraint.to_string(), c.satisfied.to_string(), c.slack.to_string()])
        .collect();
    write_table(&dir.join("constraints.csv"), &["constraint", "satisfied", "slack"], &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub quantity: String,
    pub reference: f64,
    pub estimate: f64,
}

impl ValidationRow {
    pub fn rel_error(&self) -> f64 {
        (self.estimate - self.reference).abs() / self.reference.abs()
    }
}

/// Monte-Carlo transmission times against quadrature, then the simulator
/// against the closed forms, all on the base scenario.
pub fn validate(cfg: &ExperimentConfig, base_seed: u64) -> Result<Vec<ValidationRow>, HarnessError> {
    let m = cfg.system.build()?;
    let quad = QuadratureSettings::default();
    let samples = cfg.validation.monte_carlo_samples.max(1);
    let mut rows = Vec::new();

    let links = [
        ("uplink transmission time", &m.sources[0].uplink, m.uplink_packet(0)?),
        ("downlink transmission time", &m.downlink, m.downlink_packet(0)?),
    ];
    for (k, (name, ch, pkt)) in links.into_iter().enumerate() {
        let mut rng = seed::rng(seed::derive(base_seed, streams::REPLICATION, k as u64));
        let total: f64 = (0..samples).map(|_| sample_tx_time(ch, &pkt, &mut rng)).sum();
        rows.push(ValidationRow {
            quantity: format!("{name} (quadrature vs monte carlo)"),
            reference: expected_tx_time(ch, &pkt, &quad)?,
            estimate: total / samples as f64,
        });
    }

    let sim_cfg = SimConfig::new(Horizon::Packets(cfg.validation.des_packets));
    let rng = seed::rng(seed::derive(base_seed, streams::REPLICATION, 100));
    let sim = des::run(&m, &sim_cfg, rng)?;
    let times = transmission_times(&m, &quad)?;
    let breakdown = aoi_breakdown(&m, &quad, cfg.formulas())?;
    let exact_tx = transmission_wait_exact(&m, &quad)?;
    for (j, s) in sim.sources.iter().enumerate() {
        rows.push(ValidationRow {
            quantity: format!("source {j} processing wait"),
            reference: processing_queue_wait(&m, j, ProcessingWaitForm::Fcfs)?,
            estimate: s.processing_wait,
        });
        rows.push(ValidationRow {
            quantity: format!("source {j} uplink wait (max-entropy)"),
            reference: transmission_queue_wait(&m, &times.uplink, j, TransmissionWaitForm::MaxEntropy)?,
            estimate: s.uplink_wait,
        });
        rows.push(ValidationRow {
            quantity: format!("source {j} uplink wait (pollaczek-khinchine)"),
            reference: exact_tx,
            estimate: s.uplink_wait,
        });
        rows.push(ValidationRow {
            quantity: format!("source {j} time-average age"),
            reference: breakdown.sources[j].total,
            estimate: s.time_average_age,
        });
    }
    for (name, q) in [("uplink", &sim.uplink_queue), ("processing", &sim.processing_queue)] {
        rows.push(ValidationRow {
            quantity: format!("{name} queue length (little's law)"),
            reference: q.arrival_rate * q.mean_wait,
            estimate: q.mean_length,
        });
    }
    Ok(rows)
}

pub fn write_validation(rows: &[ValidationRow], dir: &Path) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.quantity.clone(),
                r.reference.to_string(),
                r.estimate.to_string(),
                r.rel_error().to_string(),
            ]
        })
        .collect();
    write_table(
        &dir.join("validation.csv"),
        &["quantity", "reference", "estimate", "rel_error"],
        &table,
    )
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub runs: Vec<(Method, Trained, Evaluation)>,
    pub random: Evaluation,
}

/// Trains each learned method listed in the config (dueling if none is)
/// on the base scenario and evaluates it next to the random policy.
pub fn train_agents(cfg: &ExperimentConfig, seed: u64) -> Result<TrainReport, HarnessError> {
    let mut methods: Vec<Method> = cfg.methods.iter().copied().filter(|m| m.is_learned()).collect();
    if methods.is_empty() {
        methods.push(Method::Dueling);
    }
    let mut env = OffloadEnv::new(cfg.env_config(&cfg.system)?).map_err(crate::agent::AgentError::from)?;
    let agent_cfg = TrainConfig {
        steps_per_episode: cfg.system.slots,
        ..cfg.agent.clone()
    };
    let episodes = cfg.evaluation.episodes;
    let mut runs = Vec::new();
    for m in methods {
        let head = if m == Method::Dueling { Head::Dueling } else { Head::Plain };
        let trained = train(&mut env, &agent_cfg, head, seed)?;
        let eval = evaluate(&mut env, &Policy::Greedy(&trained.params), episodes, seed)?;
        runs.push((m, trained, eval));
    }
    let random = evaluate(&mut env, &Policy::Random, episodes, seed)?;
    Ok(TrainReport { runs, random })
}

pub fn write_training(report: &TrainReport, dir: &Path) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    let mut summary = Vec::new();
    for (m, trained, eval) in &report.runs {
        let rows: Vec<Vec<String>> = trained
            .log
            .episodes
            .iter()
            .map(|e| {
                vec![
                    (e.episode + 1).to_string(),
                    e.total_reward.to_string(),
                    e.mean_loss.to_string(),
                    e.mean_aoi.to_string(),
                    e.epsilon.to_string(),
                ]
            })
            .collect();
        write_table(
            &dir.join(format!("training_{}.csv", m.name())),
            &["episode", "total_reward", "mean_loss", "mean_aoi", "epsilon"],
            &rows,
        )?;
        let path = dir.join(format!("checkpoint_{}.txt", m.name()));
        fs::write(&path, trained.params.to_checkpoint())
            .map_err(|source| HarnessError::Io { path, source })?;
        summary.push(vec![
            m.name().to_string(),
            eval.mean_aoi.to_string(),
            eval.mean_reward.to_string(),
            eval.episode_aoi.len().to_string(),
        ]);
    }
    summary.push(vec![
        "random".into(),
        report.random.mean_aoi.to_string(),
        report.random.mean_reward.to_string(),
        report.random.episode_aoi.len().to_string(),
    ]);
    write_table(
        &dir.join("evaluation.csv"),
        &["method", "mean_aoi", "mean_reward", "episodes"],
        &summary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_files() {
        let cfg = ExperimentConfig::default();
        let r = analytic_report(&cfg).unwrap();
        assert_eq!(r.breakdown.sources.len(), 2);
        assert!((r.system.normalized * 10.0 - r.system.raw).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        write_analytic(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("analytic.csv")).unwrap();
        assert!(text.starts_with("source,inter_arrival_s,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn small_validation_run() {
        let mut cfg = ExperimentConfig::default();
        cfg.validation.monte_carlo_samples = 20_000;
        cfg.validation.des_packets = 20_000;
        let rows = validate(&cfg, 1).unwrap();
        assert_eq!(rows.len(), 2 + 4 * 2 + 2);
        assert!(rows[0].rel_error() < 0.05);
        assert!(rows.iter().all(|r| r.estimate.is_finite()));
    }
}
