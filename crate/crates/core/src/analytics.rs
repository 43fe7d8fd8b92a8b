//! Closed-form end-to-end age decomposition.
//!
//! Per source the long-run age is
//! `1/λ_j + 1/μ + E[processing wait] + E[uplink time] + E[downlink time] + E[uplink wait]`.
//! The processing queue is an FCFS multi-class queue with deterministic
//! service; the uplink is a single shared channel whose wait is estimated
//! from a geometric (maximum-entropy) busy-period count.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{expected_tx_time, tx_time_second_moment, ChannelError};
use crate::model::{ModelError, SystemModel};
use crate::quadrature::QuadratureSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// Edge server load below one.
    ProcessingStability,
    /// Shared uplink load below one.
    UplinkStability,
    /// Downlink load below one.
    DownlinkStability,
    /// Every source generates updates.
    PositiveArrivals,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::ProcessingStability => "processing-stability",
            Constraint::UplinkStability => "uplink-stability",
            Constraint::DownlinkStability => "downlink-stability",
            Constraint::PositiveArrivals => "positive-arrivals",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("infeasible system: {constraint} violated (load {load})")]
    Infeasible { constraint: Constraint, load: f64 },
    #[error("formula is undefined for this system: {0}")]
    Undefined(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// How the processing-queue wait is composed from the busy probability and
/// the mean residual service time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessingWaitForm {
    /// `Pr_B E[A_R] / (1 - ρ)` for any number of sources.
    #[default]
    Fcfs,
    /// Single-source form for one source, and for two or more the product
    /// denominator `(1 - Σ_{i≤J} ρ_i)(1 - Σ_{i≤J-1} ρ_i)`. With `halved` unset
    /// the residual omits the factor one half.
    Staged { halved: bool },
    /// Index-excluded sums in both denominator factors.
    IndexExcluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionWaitForm {
    /// Aggregate busy-period estimate, identical for every source.
    #[default]
    MaxEntropy,
    /// Arrival sums that exclude the tagged source. Undefined for one source.
    IndexExcluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Formulas {
    pub processing: ProcessingWaitForm,
    pub transmission: TransmissionWaitForm,
}

impl Formulas {
    pub fn literal() -> Self {
        Self {
            processing: ProcessingWaitForm::IndexExcluded,
            transmission: TransmissionWaitForm::IndexExcluded,
        }
    }
}

fn infeasible(constraint: Constraint, load: f64) -> AnalyticsError {
    AnalyticsError::Infeasible { constraint, load }
}

/// Edge-server utilization `Σ λ_j / μ`.
pub fn busy_probability(m: &SystemModel) -> Result<f64, AnalyticsError> {
    let rho = m.total_arrival_rate() / m.edge_rate;
    if rho >= 1.0 {
        return Err(infeasible(Constraint::ProcessingStability, rho));
    }
    Ok(rho)
}

fn residual_sum(m: &SystemModel) -> f64 {
    m.edge_loads()
        .iter()
        .zip(&m.sources)
        .filter(|(_, s)| s.arrival_rate > 0.0)
        .map(|(rho, s)| rho * rho / s.arrival_rate)
        .sum()
}

/// Mean residual service time seen by an arrival that finds the server busy,
/// `E[A²] / (2 E[A])` for deterministic service.
pub fn residual_service_time(m: &SystemModel) -> Result<f64, AnalyticsError> {
    let rho = busy_probability(m)?;
    if rho == 0.0 {
        return Ok(0.5 * m.edge_service_time());
    }
    Ok(residual_sum(m) / (2.0 * rho))
}

fn unhalved_residual(m: &SystemModel) -> Result<f64, AnalyticsError> {
    Ok(2.0 * residual_service_time(m)?)
}

fn positive_denominator(value: f64, what: Constraint, load: f64) -> Result<f64, AnalyticsError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(infeasible(what, load))
    }
}

pub fn processing_queue_wait(
    m: &SystemModel,
    j: usize,
    form: ProcessingWaitForm,
) -> Result<f64, AnalyticsError> {
    m.source(j)?;
    let busy = busy_probability(m)?;
    let loads = m.edge_loads();
    let n = loads.len();
    let rho = |range: std::ops::Range<usize>, skip: Option<usize>| -> f64 {
        range
            .filter(|&i| Some(i) != skip)
            .map(|i| loads[i])
            .sum()
    };
    let stab = Constraint::ProcessingStability;
    match form {
        ProcessingWaitForm::Fcfs => {
            Ok(busy * residual_service_time(m)? / positive_denominator(1.0 - busy, stab, busy)?)
        }
        ProcessingWaitForm::Staged { halved } => {
            let residual = if halved {
                residual_service_time(m)?
            } else {
                unhalved_residual(m)?
            };
            let denom = if n == 1 {
                1.0 - loads[0]
            } else {
                (1.0 - rho(0..n, None)) * (1.0 - rho(0..n - 1, None))
            };
            Ok(busy * residual / positive_denominator(denom, stab, busy)?)
        }
        ProcessingWaitForm::IndexExcluded => {
            let numerator = residual_sum(m) / 2.0;
            let first = 1.0 - rho(0..n, Some(j));
            let second = if n > 1 {
                1.0 - rho(0..n - 1, Some(j))
            } else {
                1.0
            };
            Ok(numerator / positive_denominator(first * second, stab, busy)?)
        }
    }
}

/// Mean uplink and downlink transmission times per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionTimes {
    pub uplink: Vec<f64>,
    pub downlink: Vec<f64>,
}

pub fn transmission_times(
    m: &SystemModel,
    quad: &QuadratureSettings,
) -> Result<TransmissionTimes, AnalyticsError> {
    let mut uplink = Vec::with_capacity(m.num_sources());
    let mut downlink = Vec::with_capacity(m.num_sources());
    for (j, s) in m.sources.iter().enumerate() {
        uplink.push(expected_tx_time(&s.uplink, &m.uplink_packet(j)?, quad)?);
        downlink.push(expected_tx_time(&m.downlink, &m.downlink_packet(j)?, quad)?);
    }
    Ok(TransmissionTimes { uplink, downlink })
}

/// Offered load on the shared uplink, `Σ λ_j E[I_j]`.
pub fn uplink_load(m: &SystemModel, uplink_times: &[f64]) -> f64 {
    m.sources
        .iter()
        .zip(uplink_times)
        .map(|(s, t)| s.arrival_rate * t)
        .sum()
}

pub fn transmission_queue_wait(
    m: &SystemModel,
    uplink_times: &[f64],
    j: usize,
    form: TransmissionWaitForm,
) -> Result<f64, AnalyticsError> {
    m.source(j)?;
    let rho_t = uplink_load(m, uplink_times);
    if rho_t >= 1.0 {
        return Err(infeasible(Constraint::UplinkStability, rho_t));
    }
    let total = m.total_arrival_rate();
    match form {
        TransmissionWaitForm::MaxEntropy => {
            if total == 0.0 {
                return Ok(0.0);
            }
            // geometric busy-period count with P(X = 0) = 1 - ρ_T
            let mean_in_system = rho_t / (1.0 - rho_t);
            let mean_service = rho_t / total;
            Ok(mean_in_system / total - mean_service)
        }
        TransmissionWaitForm::IndexExcluded => {
            let others: f64 = m
                .sources
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, s)| s.arrival_rate)
                .sum();
            if others == 0.0 {
                return Err(AnalyticsError::Undefined(
                    "index-excluded uplink wait needs another active source",
                ));
            }
            let excluded_load = others * uplink_times[j];
            let denom = others * (1.0 - excluded_load);
            if denom <= 0.0 {
                return Err(infeasible(Constraint::UplinkStability, excluded_load));
            }
            Ok(rho_t * rho_t / denom)
        }
    }
}

/// Exact M/G/1 FCFS uplink wait `Λ E[I²] / (2 (1 - ρ_T))` for the fading law.
pub fn transmission_wait_exact(
    m: &SystemModel,
    quad: &QuadratureSettings,
) -> Result<f64, AnalyticsError> {
    let total = m.total_arrival_rate();
    let mut first = 0.0;
    let mut second = 0.0;
    for (j, s) in m.sources.iter().enumerate() {
        let pkt = m.uplink_packet(j)?;
        first += s.arrival_rate * expected_tx_time(&s.uplink, &pkt, quad)?;
        second += s.arrival_rate * tx_time_second_moment(&s.uplink, &pkt, quad)?;
    }
    if first >= 1.0 {
        return Err(infeasible(Constraint::UplinkStability, first));
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(second / (2.0 * (1.0 - first)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceAoi {
    pub inv_lambda: f64,
    pub edge_service: f64,
    pub proc_wait: f64,
    pub uplink_time: f64,
    pub downlink_time: f64,
    pub tx_wait: f64,
    pub total: f64,
}

impl SourceAoi {
    pub fn from_components(
        inv_lambda: f64,
        edge_service: f64,
        proc_wait: f64,
        uplink_time: f64,
        downlink_time: f64,
        tx_wait: f64,
    ) -> Self {
        Self {
            inv_lambda,
            edge_service,
            proc_wait,
            uplink_time,
            downlink_time,
            tx_wait,
            total: inv_lambda + edge_service + proc_wait + uplink_time + downlink_time + tx_wait,
        }
    }

    pub fn components(&self) -> [f64; 6] {
        [
            self.inv_lambda,
            self.edge_service,
            self.proc_wait,
            self.uplink_time,
            self.downlink_time,
            self.tx_wait,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiBreakdown {
    pub sources: Vec<SourceAoi>,
}

impl AoiBreakdown {
    /// `Σ Δ_j / J`.
    pub fn mean(&self) -> f64 {
        self.sources.iter().map(|s| s.total).sum::<f64>() / self.sources.len() as f64
    }
}

fn require_feasible(m: &SystemModel, times: &TransmissionTimes) -> Result<(), AnalyticsError> {
    for s in &m.sources {
        if !(s.arrival_rate > 0.0) {
            return Err(infeasible(Constraint::PositiveArrivals, s.arrival_rate));
        }
    }
    busy_probability(m)?;
    let up = uplink_load(m, &times.uplink);
    if up >= 1.0 {
        return Err(infeasible(Constraint::UplinkStability, up));
    }
    let down = downlink_load(m, &times.downlink);
    if down >= 1.0 {
        return Err(infeasible(Constraint::DownlinkStability, down));
    }
    Ok(())
}

fn downlink_load(m: &SystemModel, downlink_times: &[f64]) -> f64 {
    m.sources
        .iter()
        .zip(downlink_times)
        .map(|(s, t)| s.arrival_rate * t)
        .sum()
}

/// Full per-source decomposition.
pub fn aoi_breakdown(
    m: &SystemModel,
    quad: &QuadratureSettings,
    formulas: Formulas,
) -> Result<AoiBreakdown, AnalyticsError> {
    m.validate()?;
    let times = transmission_times(m, quad)?;
    require_feasible(m, &times)?;
    let sources = (0..m.num_sources())
        .map(|j| {
            Ok(SourceAoi::from_components(
                1.0 / m.sources[j].arrival_rate,
                m.edge_service_time(),
                processing_queue_wait(m, j, formulas.processing)?,
                times.uplink[j],
                times.downlink[j],
                transmission_queue_wait(m, &times.uplink, j, formulas.transmission)?,
            ))
        })
        .collect::<Result<_, AnalyticsError>>()?;
    Ok(AoiBreakdown { sources })
}

pub fn aoi_per_source(
    m: &SystemModel,
    j: usize,
    quad: &QuadratureSettings,
    formulas: Formulas,
) -> Result<SourceAoi, AnalyticsError> {
    m.source(j)?;
    Ok(aoi_breakdown(m, quad, formulas)?.sources[j])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemAoi {
    /// `Σ Δ_j / J` in seconds.
    pub raw: f64,
    /// `raw / T` for a horizon of `T` slots.
    pub normalized: f64,
}

pub fn system_aoi(
    m: &SystemModel,
    slots: u32,
    quad: &QuadratureSettings,
    formulas: Formulas,
) -> Result<SystemAoi, AnalyticsError> {
    if slots == 0 {
        return Err(AnalyticsError::Undefined("horizon must contain at least one slot"));
    }
    let raw = aoi_breakdown(m, quad, formulas)?.mean();
    Ok(SystemAoi {
        raw,
        normalized: raw / slots as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: Constraint,
    pub satisfied: bool,
    /// `1 - load`; for positive arrivals, the smallest arrival rate.
    pub slack: f64,
}

/// Evaluates every stability and positivity constraint without failing fast.
pub fn check_feasibility(
    m: &SystemModel,
    quad: &QuadratureSettings,
) -> Result<Vec<ConstraintCheck>, AnalyticsError> {
    let times = transmission_times(m, quad)?;
    let load_check = |constraint, load: f64| ConstraintCheck {
        constraint,
        satisfied: load < 1.0,
        slack: 1.0 - load,
    };
    let min_rate = m
        .sources
        .iter()
        .map(|s| s.arrival_rate)
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        load_check(
            Constraint::ProcessingStability,
            m.total_arrival_rate() / m.edge_rate,
        ),
        load_check(Constraint::UplinkStability, uplink_load(m, &times.uplink)),
        load_check(Constraint::DownlinkStability, downlink_load(m, &times.downlink)),
        ConstraintCheck {
            constraint: Constraint::PositiveArrivals,
            satisfied: min_rate > 0.0,
            slack: min_rate,
        },
    ])
}
