//! Discrete-event simulation of the uplink → edge → downlink pipeline.
//!
//! All sources share one FCFS uplink. The edge server is FCFS with a single
//! server. Processed packets go straight onto the downlink, where transfers
//! run in parallel and never queue. Statistics exclude a warm-up prefix of the
//! horizon.

mod pipeline;
mod trace;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, SystemModel};
use crate::seed::SimRng;

pub(crate) use pipeline::{Downlink, Output, Pipeline, PipelineLaws};
pub use pipeline::{PacketRecord, ServiceLaw, TxLaw};
pub use trace::{write_traces_csv, AgeTrace, Delivery, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    /// Simulated seconds.
    Time(f64),
    /// Total packets generated across all sources.
    Packets(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: Horizon,
    pub service: ServiceLaw,
    pub uplink_law: TxLaw,
    pub downlink_law: TxLaw,
    pub warmup_fraction: f64,
    pub keep_records: bool,
}

impl SimConfig {
    pub fn new(horizon: Horizon) -> Self {
        Self {
            horizon,
            service: ServiceLaw::Deterministic,
            uplink_law: TxLaw::Fading,
            downlink_law: TxLaw::Fading,
            warmup_fraction: 0.05,
            keep_records: false,
        }
    }

    /// Zero link times and exponential service: a single-source system
    /// reduces to an M/M/1 FCFS queue.
    pub fn queue_only(horizon: Horizon) -> Self {
        Self {
            service: ServiceLaw::Exponential,
            uplink_law: TxLaw::Fixed(0.0),
            downlink_law: TxLaw::Fixed(0.0),
            ..Self::new(horizon)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimWarning {
    /// The source delivered nothing inside the measurement window.
    UnderSampled { source: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub packets: u64,
    pub uplink_wait: f64,
    pub uplink_time: f64,
    pub processing_wait: f64,
    pub processing_time: f64,
    pub downlink_time: f64,
    pub system_time: f64,
    /// Time-average age over the window; NaN when under-sampled.
    pub time_average_age: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    /// Time-average number waiting (excluding the one in service).
    pub mean_length: f64,
    pub mean_wait: f64,
    /// Counted entries per second of window.
    pub arrival_rate: f64,
}

impl QueueStats {
    /// `|L - λW| / L`; zero when the queue never formed.
    pub fn littles_law_error(&self) -> f64 {
        let predicted = self.arrival_rate * self.mean_wait;
        if self.mean_length == 0.0 && predicted == 0.0 {
            0.0
        } else {
            (self.mean_length - predicted).abs() / self.mean_length.max(predicted)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub window: (f64, f64),
    pub sources: Vec<SourceStats>,
    pub traces: Vec<AgeTrace>,
    pub uplink_queue: QueueStats,
    pub processing_queue: QueueStats,
    pub generated: u64,
    pub delivered: u64,
    pub conservation_violations: u64,
    pub warnings: Vec<SimWarning>,
    pub records: Vec<PacketRecord>,
}

impl SimResult {
    /// Mean of the per-source time-average ages.
    pub fn mean_age(&self) -> f64 {
        self.sources.iter().map(|s| s.time_average_age).sum::<f64>() / self.sources.len() as f64
    }

    /// Packet-weighted mean over all counted packets of one field.
    pub fn pooled(&self, field: impl Fn(&SourceStats) -> f64) -> f64 {
        let n: u64 = self.sources.iter().map(|s| s.packets).sum();
        if n == 0 {
            return f64::NAN;
        }
        self.sources
            .iter()
            .map(|s| field(s) * s.packets as f64)
            .sum::<f64>()
            / n as f64
    }
}

#[derive(Default, Clone, Copy)]
struct Sums {
    n: u64,
    uplink_wait: f64,
    uplink_time: f64,
    processing_wait: f64,
    processing_time: f64,
    downlink_time: f64,
    system_time: f64,
}

impl Sums {
    fn add(&mut self, r: &PacketRecord) {
        self.n += 1;
        self.uplink_wait += r.uplink_wait();
        self.uplink_time += r.uplink_end - r.uplink_start;
        self.processing_wait += r.processing_wait();
        self.processing_time += r.processing_end - r.processing_start;
        self.downlink_time += r.delivered - r.processing_end;
        self.system_time += r.system_time();
    }

    fn mean(&self, v: f64) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            v / self.n as f64
        }
    }
}

/// Runs one replication. Unstable systems are allowed.
pub fn run(m: &SystemModel, cfg: &SimConfig, rng: SimRng) -> Result<SimResult, ModelError> {
    let laws = PipelineLaws {
        service: cfg.service,
        uplink: cfg.uplink_law,
        downlink: cfg.downlink_law,
    };
    let mut p = Pipeline::new(m, laws, Downlink::Immediate, rng)?;
    let n_src = m.num_sources();

    let (mut window_start, mut window_end) = match cfg.horizon {
        Horizon::Time(t) => {
            p.set_arrival_cutoff(t);
            p.set_measurement_window(cfg.warmup_fraction * t, t);
            (cfg.warmup_fraction * t, t)
        }
        Horizon::Packets(n) => {
            p.set_packet_budget(n);
            (f64::INFINITY, f64::INFINITY)
        }
    };
    let warmup_packets = match cfg.horizon {
        Horizon::Packets(n) => ((n as f64 * cfg.warmup_fraction).ceil() as u64).max(1),
        Horizon::Time(_) => 0,
    };

    let mut delivered_records = Vec::new();
    let mut last_gen = vec![0.0f64; n_src];
    let mut delivered = 0u64;
    // deliveries that lower the age, in time order
    let mut resets: Vec<Vec<Delivery>> = vec![Vec::new(); n_src];

    while let Some(out) = p.step() {
        match out {
            Some(Output::Generated(_)) => {
                if let Horizon::Packets(n) = cfg.horizon {
                    if p.generated == warmup_packets {
                        window_start = p.now();
                        p.set_measurement_window(window_start, f64::INFINITY);
                    }
                    if p.generated == n {
                        window_end = p.now();
                        p.set_measurement_window(window_start, window_end);
                    }
                }
            }
            Some(Output::Delivered(rec)) => {
                delivered += 1;
                let j = rec.source;
                if rec.generated > last_gen[j] {
                    last_gen[j] = rec.generated;
                    resets[j].push(Delivery {
                        time: rec.delivered,
                        system_time: rec.system_time(),
                    });
                }
                delivered_records.push(rec);
            }
            Some(Output::Processed(_)) | None => {}
        }
    }
    if !window_end.is_finite() {
        // packet budget never reached (all rates zero)
        window_end = p.now();
        window_start = window_start.min(window_end);
    }

    let mut sums = vec![Sums::default(); n_src];
    let mut records = Vec::new();
    for rec in &delivered_records {
        if rec.generated >= window_start && rec.generated < window_end {
            sums[rec.source].add(rec);
        }
    }
    if cfg.keep_records {
        records = delivered_records.clone();
        records.sort_by(|a, b| a.generated.total_cmp(&b.generated));
    }

    let mut traces = Vec::with_capacity(n_src);
    let mut warnings = Vec::new();
    for (j, list) in resets.iter().enumerate() {
        let before = list.partition_point(|d| d.time <= window_start);
        let gen0 = if before == 0 {
            0.0
        } else {
            list[before - 1].generated()
        };
        let mut t = AgeTrace::new(j, window_start, window_end, window_start - gen0);
        for d in list[before..].iter().take_while(|d| d.time <= window_end) {
            t.push(*d).expect("recorded deliveries always lower the age");
        }
        if t.deliveries.is_empty() {
            warnings.push(SimWarning::UnderSampled { source: j });
        }
        traces.push(t);
    }

    let sources: Vec<SourceStats> = sums
        .iter()
        .zip(&traces)
        .map(|(s, t)| SourceStats {
            packets: s.n,
            uplink_wait: s.mean(s.uplink_wait),
            uplink_time: s.mean(s.uplink_time),
            processing_wait: s.mean(s.processing_wait),
            processing_time: s.mean(s.processing_time),
            downlink_time: s.mean(s.downlink_time),
            system_time: s.mean(s.system_time),
            time_average_age: t.time_average_age().unwrap_or(f64::NAN),
        })
        .collect();

    let span = window_end - window_start;
    let counted: u64 = sums.iter().map(|s| s.n).sum();
    let pooled_wait = |f: fn(&Sums) -> f64| -> f64 {
        if counted == 0 {
            0.0
        } else {
            sums.iter().map(f).sum::<f64>() / counted as f64
        }
    };
    let queue = |area: f64, wait: f64| QueueStats {
        mean_length: if span > 0.0 { area / span } else { 0.0 },
        mean_wait: wait,
        arrival_rate: if span > 0.0 { counted as f64 / span } else { 0.0 },
    };
    Ok(SimResult {
        window: (window_start, window_end),
        uplink_queue: queue(p.uplink_queue_area.area, pooled_wait(|s| s.uplink_wait)),
        processing_queue: queue(p.edge_queue_area.area, pooled_wait(|s| s.processing_wait)),
        sources,
        traces,
        generated: p.generated,
        delivered,
        conservation_violations: p.conservation_violations,
        warnings,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::simple;
    use crate::seed;

    #[test]
    fn same_seed_same_traces() {
        let m = simple(&[1.0, 2.0], 10.0);
        let cfg = SimConfig::new(Horizon::Time(500.0));
        let a = run(&m, &cfg, seed::rng(11)).unwrap();
        let b = run(&m, &cfg, seed::rng(11)).unwrap();
        assert_eq!(a, b);
        let c = run(&m, &cfg, seed::rng(12)).unwrap();
        assert_ne!(a.traces, c.traces);
    }

    #[test]
    fn conservation_holds_at_every_event() {
        let m = simple(&[3.0, 3.0, 2.0], 10.0);
        let r = run(&m, &SimConfig::new(Horizon::Packets(20_000)), seed::rng(1)).unwrap();
        assert_eq!(r.conservation_violations, 0);
        assert_eq!(r.generated, 20_000);
        assert_eq!(r.delivered, 20_000);
    }

    #[test]
    fn pipeline_timestamps_are_ordered() {
        let mut cfg = SimConfig::new(Horizon::Packets(2_000));
        cfg.keep_records = true;
        let r = run(&simple(&[2.0, 1.0], 5.0), &cfg, seed::rng(5)).unwrap();
        for rec in &r.records {
            assert!(rec.generated <= rec.uplink_start);
            assert!(rec.uplink_start <= rec.uplink_end);
            assert!(rec.uplink_end <= rec.processing_start);
            assert!(rec.processing_start < rec.processing_end);
            assert!(rec.processing_end <= rec.delivered);
            assert!(rec.system_time() > 0.0);
        }
    }

    #[test]
    fn light_traffic_has_no_queues() {
        let m = simple(&[1e-3], 1e3);
        let r = run(&m, &SimConfig::new(Horizon::Packets(2_000)), seed::rng(2)).unwrap();
        assert!(r.sources[0].processing_wait < 1e-6);
        assert!(r.sources[0].uplink_wait < 1e-6);
    }

    #[test]
    fn tiny_horizon_warns() {
        let m = simple(&[1e-3, 1e-3], 10.0);
        let r = run(&m, &SimConfig::new(Horizon::Time(1.0)), seed::rng(2)).unwrap();
        assert_eq!(r.warnings.len(), 2);
        assert!(r.sources[0].time_average_age.is_nan());
    }

    #[test]
    fn ages_are_positive_after_first_delivery() {
        let r = run(&simple(&[1.0], 4.0), &SimConfig::new(Horizon::Time(200.0)), seed::rng(8)).unwrap();
        let t = &r.traces[0];
        let first = t.deliveries[0].time;
        let mut x = first;
        while x < t.end {
            assert!(t.age_at(x) > 0.0);
            x += 0.01;
        }
    }

    #[test]
    fn little_law_holds_in_each_queue() {
        let m = simple(&[2.0, 2.0], 6.0);
        let r = run(&m, &SimConfig::new(Horizon::Packets(200_000)), seed::rng(4)).unwrap();
        assert!(r.processing_queue.littles_law_error() < 0.03);
        assert!(r.uplink_queue.littles_law_error() < 0.03);
    }
}
