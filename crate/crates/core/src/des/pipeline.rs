use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::channel::{sample_gain, tx_time_for_gain, ChannelParams, PacketSpec};
use crate::model::{ModelError, SystemModel};
use crate::seed::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceLaw {
    #[default]
    Deterministic,
    Exponential,
}

/// How per-packet link times are produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxLaw {
    /// Shannon time under an independent fading draw per transmission.
    #[default]
    Fading,
    /// Every transmission takes this many seconds.
    Fixed(f64),
}

/// What happens to a packet when the edge server finishes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Downlink {
    /// Sent to the fog at once; transfers never wait for each other.
    Immediate,
    /// Handed back to the caller, who decides when to forward it.
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub source: usize,
    pub generated: f64,
    pub uplink_start: f64,
    pub uplink_end: f64,
    pub processing_start: f64,
    pub processing_end: f64,
    /// Arrival at the fog; NaN until delivered.
    pub delivered: f64,
    /// Sampled downlink transfer time.
    pub downlink_time: f64,
}

impl PacketRecord {
    fn new(source: usize, generated: f64, downlink_time: f64) -> Self {
        Self {
            source,
            generated,
            uplink_start: f64::NAN,
            uplink_end: f64::NAN,
            processing_start: f64::NAN,
            processing_end: f64::NAN,
            delivered: f64::NAN,
            downlink_time,
        }
    }

    pub fn system_time(&self) -> f64 {
        self.delivered - self.generated
    }

    pub fn uplink_wait(&self) -> f64 {
        self.uplink_start - self.generated
    }

    pub fn processing_wait(&self) -> f64 {
        self.processing_start - self.uplink_end
    }
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    record: PacketRecord,
    uplink_time: f64,
    service_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival(usize),
    UplinkDone,
    EdgeDone,
    Delivery(PacketRecord),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed for a min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Something the pipeline reports while advancing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Output {
    Generated(usize),
    /// Edge service finished; in gated mode the caller now owns the packet.
    Processed(PacketRecord),
    Delivered(PacketRecord),
}

/// Running sum of queue length over time inside a measurement window.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LengthIntegral {
    pub area: f64,
}

/// Shared FCFS uplink feeding a single FCFS edge server, with Poisson
/// arrivals per source and one random stream for all draws.
#[derive(Debug, Clone)]
pub(crate) struct Pipeline {
    rates: Vec<f64>,
    uplinks: Vec<(ChannelParams, PacketSpec)>,
    downlinks: Vec<PacketSpec>,
    downlink: ChannelParams,
    edge_rate: f64,
    service: ServiceLaw,
    uplink_law: TxLaw,
    downlink_law: TxLaw,
    mode: Downlink,
    rng: SimRng,
    events: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    uplink_queue: VecDeque<InFlight>,
    uplink_busy: Option<InFlight>,
    edge_queue: VecDeque<InFlight>,
    edge_busy: Option<InFlight>,
    in_downlink: u64,
    /// Arrivals at or after this time are not generated.
    arrival_cutoff: f64,
    packet_budget: Option<u64>,
    pub generated: u64,
    pub left_pipeline: u64,
    pub conservation_violations: u64,
    measure_from: f64,
    measure_to: f64,
    pub uplink_queue_area: LengthIntegral,
    pub edge_queue_area: LengthIntegral,
}

pub(crate) struct PipelineLaws {
    pub service: ServiceLaw,
    pub uplink: TxLaw,
    pub downlink: TxLaw,
}

impl Pipeline {
    pub fn new(
        m: &SystemModel,
        laws: PipelineLaws,
        mode: Downlink,
        rng: SimRng,
    ) -> Result<Self, ModelError> {
        m.validate()?;
        let uplinks = (0..m.num_sources())
            .map(|j| Ok((m.sources[j].uplink, m.uplink_packet(j)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let downlinks = (0..m.num_sources())
            .map(|j| m.downlink_packet(j))
            .collect::<Result<Vec<_>, _>>()?;
        let mut p = Self {
            rates: m.sources.iter().map(|s| s.arrival_rate).collect(),
            uplinks,
            downlinks,
            downlink: m.downlink,
            edge_rate: m.edge_rate,
            service: laws.service,
            uplink_law: laws.uplink,
            downlink_law: laws.downlink,
            mode,
            rng,
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            uplink_queue: VecDeque::new(),
            uplink_busy: None,
            edge_queue: VecDeque::new(),
            edge_busy: None,
            in_downlink: 0,
            arrival_cutoff: f64::INFINITY,
            packet_budget: None,
            generated: 0,
            left_pipeline: 0,
            conservation_violations: 0,
            measure_from: f64::INFINITY,
            measure_to: f64::INFINITY,
            uplink_queue_area: LengthIntegral::default(),
            edge_queue_area: LengthIntegral::default(),
        };
        for j in 0..p.rates.len() {
            if p.rates[j] > 0.0 {
                let gap = p.exp(p.rates[j]);
                p.schedule(gap, EventKind::Arrival(j));
            }
        }
        Ok(p)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn set_arrival_cutoff(&mut self, t: f64) {
        self.arrival_cutoff = t;
    }

    pub fn set_packet_budget(&mut self, n: u64) {
        self.packet_budget = Some(n);
    }

    pub fn set_measurement_window(&mut self, from: f64, to: f64) {
        self.measure_from = from;
        self.measure_to = to;
    }

    pub fn queued(&self) -> u64 {
        (self.uplink_queue.len()
            + self.edge_queue.len()
            + usize::from(self.uplink_busy.is_some())
            + usize::from(self.edge_busy.is_some())) as u64
            + self.in_downlink
    }

    fn exp(&mut self, rate: f64) -> f64 {
        let e: f64 = Exp1.sample(&mut self.rng);
        e / rate
    }

    fn schedule(&mut self, delay: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event {
            time: self.now + delay,
            seq: self.seq,
            kind,
        });
    }

    fn link_time(law: TxLaw, ch: &ChannelParams, pkt: &PacketSpec, gain: f64) -> f64 {
        match law {
            TxLaw::Fading => tx_time_for_gain(ch, pkt, gain),
            TxLaw::Fixed(t) => t,
        }
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.events.peek().map(|e| e.time)
    }

    fn accumulate(&mut self, until: f64) {
        let lo = self.now.max(self.measure_from);
        let hi = until.min(self.measure_to);
        if hi > lo {
            let dt = hi - lo;
            self.uplink_queue_area.area += self.uplink_queue.len() as f64 * dt;
            self.edge_queue_area.area += self.edge_queue.len() as f64 * dt;
        }
    }

    fn start_uplink(&mut self) {
        if self.uplink_busy.is_none() {
            if let Some(mut p) = self.uplink_queue.pop_front() {
                p.record.uplink_start = self.now;
                let t = p.uplink_time;
                self.uplink_busy = Some(p);
                self.schedule(t, EventKind::UplinkDone);
            }
        }
    }

    fn start_edge(&mut self) {
        if self.edge_busy.is_none() {
            if let Some(mut p) = self.edge_queue.pop_front() {
                p.record.processing_start = self.now;
                let t = p.service_time;
                self.edge_busy = Some(p);
                self.schedule(t, EventKind::EdgeDone);
            }
        }
    }

    fn arrival(&mut self, j: usize) -> Option<Output> {
        let budget_left = self.packet_budget.is_none_or(|n| self.generated < n);
        if self.now >= self.arrival_cutoff || !budget_left {
            return None;
        }
        // fixed draw order per arrival: next gap, uplink gain, service, downlink gain
        let gap = self.exp(self.rates[j]);
        let up_gain = sample_gain(&self.uplinks[j].0, &mut self.rng);
        let service_draw: f64 = Exp1.sample(&mut self.rng);
        let down_gain = sample_gain(&self.downlink, &mut self.rng);

        let (ch, pkt) = self.uplinks[j];
        let uplink_time = Self::link_time(self.uplink_law, &ch, &pkt, up_gain);
        let downlink_time =
            Self::link_time(self.downlink_law, &self.downlink, &self.downlinks[j], down_gain);
        let service_time = match self.service {
            ServiceLaw::Deterministic => 1.0 / self.edge_rate,
            ServiceLaw::Exponential => service_draw / self.edge_rate,
        };
        self.generated += 1;
        self.uplink_queue.push_back(InFlight {
            record: PacketRecord::new(j, self.now, downlink_time),
            uplink_time,
            service_time,
        });
        self.start_uplink();
        self.schedule(gap, EventKind::Arrival(j));
        Some(Output::Generated(j))
    }

    /// Processes the next event. Returns `None` once the event list is empty.
    pub fn step(&mut self) -> Option<Option<Output>> {
        let ev = self.events.pop()?;
        self.accumulate(ev.time);
        self.now = ev.time;
        let out = match ev.kind {
            EventKind::Arrival(j) => self.arrival(j),
            EventKind::UplinkDone => {
                let mut p = self.uplink_busy.take().expect("uplink completion without packet");
                p.record.uplink_end = self.now;
                self.edge_queue.push_back(p);
                self.start_uplink();
                self.start_edge();
                None
            }
            EventKind::EdgeDone => {
                let mut p = self.edge_busy.take().expect("edge completion without packet");
                p.record.processing_end = self.now;
                self.start_edge();
                match self.mode {
                    Downlink::Immediate => {
                        self.in_downlink += 1;
                        self.schedule(p.record.downlink_time, EventKind::Delivery(p.record));
                        None
                    }
                    Downlink::Gated => {
                        self.left_pipeline += 1;
                        Some(Output::Processed(p.record))
                    }
                }
            }
            EventKind::Delivery(mut rec) => {
                rec.delivered = self.now;
                self.in_downlink -= 1;
                self.left_pipeline += 1;
                Some(Output::Delivered(rec))
            }
        };
        if self.generated != self.left_pipeline + self.queued() {
            self.conservation_violations += 1;
        }
        Some(out)
    }

    /// Runs every event with time `<= t`, then sets the clock to `t`.
    pub fn advance_to(&mut self, t: f64, mut sink: impl FnMut(Output)) {
        while self.next_event_time().is_some_and(|et| et <= t) {
            if let Some(Some(out)) = self.step() {
                sink(out);
            }
        }
        self.accumulate(t);
        self.now = self.now.max(t);
    }
}
