//! Slotted offloading environment over the simulated pipeline.
//!
//! Every step advances the pipeline by one slot. Processed packets wait at
//! the edge until the action forwards them to the fog; forwarding sends the
//! freshest waiting packet of a source and resets that source's age at the fog
//! to the packet's system time.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{sample_gain, shannon_rate};
use crate::des::{Downlink, Output, PacketRecord, Pipeline, PipelineLaws, ServiceLaw, TxLaw};
use crate::model::{ModelError, SystemModel};
use crate::seed::{self, streams, SimRng};

pub const MAX_PER_SOURCE_ACTION_SOURCES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode is finished; call reset")]
    Finished,
    #[error("environment has not been reset")]
    NotReset,
    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
    #[error("per-source actions support at most {MAX_PER_SOURCE_ACTION_SOURCES} sources, got {0}")]
    TooManySources(usize),
    #[error("invalid environment setting {0}")]
    InvalidSetting(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Minimal episodic interface consumed by the agents.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError>;
    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSpace {
    /// One bit: forward every source's freshest processed packet, or nothing.
    #[default]
    Shared,
    /// One bit per source, `2^J` actions.
    PerSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardSign {
    /// `-Σ age / (J T)`: larger reward means fresher information.
    #[default]
    Negative,
    /// `+Σ age / (J T)`.
    Positive,
}

/// Divisors applied to each state field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateScales {
    pub arrival_rate: f64,
    pub service_rate: f64,
    pub link_rate: f64,
    pub age: f64,
}

impl Default for StateScales {
    fn default() -> Self {
        Self {
            arrival_rate: 1.0,
            service_rate: 10.0,
            link_rate: 1e6,
            age: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub model: SystemModel,
    pub slots: u32,
    /// Slot length in seconds.
    pub slot_duration: f64,
    pub action_space: ActionSpace,
    pub reward_sign: RewardSign,
    pub service: ServiceLaw,
    pub uplink_law: TxLaw,
    pub downlink_law: TxLaw,
    pub scales: StateScales,
    /// Appends the fraction of slots remaining to the state.
    #[serde(default)]
    pub time_feature: bool,
}

impl EnvConfig {
    pub fn new(model: SystemModel, slots: u32) -> Self {
        Self {
            model,
            slots,
            slot_duration: 1.0,
            action_space: ActionSpace::Shared,
            reward_sign: RewardSign::Negative,
            service: ServiceLaw::Deterministic,
            uplink_law: TxLaw::Fading,
            downlink_law: TxLaw::Fading,
            scales: StateScales::default(),
            time_feature: false,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.model.validate()?;
        if self.slots == 0 {
            return Err(EnvError::InvalidSetting("slots must be positive"));
        }
        if !(self.slot_duration.is_finite() && self.slot_duration > 0.0) {
            return Err(EnvError::InvalidSetting("slot_duration must be positive"));
        }
        let s = &self.scales;
        if ![s.arrival_rate, s.service_rate, s.link_rate, s.age]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(EnvError::InvalidSetting("state scales must be positive"));
        }
        let j = self.model.num_sources();
        if self.action_space == ActionSpace::PerSource && j > MAX_PER_SOURCE_ACTION_SOURCES {
            return Err(EnvError::TooManySources(j));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        4 * self.model.num_sources() + 2 + usize::from(self.time_feature)
    }

    pub fn num_actions(&self) -> usize {
        match self.action_space {
            ActionSpace::Shared => 2,
            ActionSpace::PerSource => 1 << self.model.num_sources(),
        }
    }

    /// Offload bit per source for an action index.
    pub fn decode_action(&self, action: usize) -> Result<Vec<bool>, EnvError> {
        let count = self.num_actions();
        if action >= count {
            return Err(EnvError::InvalidAction { action, count });
        }
        let j = self.model.num_sources();
        Ok(match self.action_space {
            ActionSpace::Shared => vec![action == 1; j],
            ActionSpace::PerSource => (0..j).map(|i| action >> i & 1 == 1).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Age of every source at the fog at the end of the slot.
    pub ages: Vec<f64>,
    pub forwarded: Vec<bool>,
}

impl StepInfo {
    pub fn mean_age(&self) -> f64 {
        if self.ages.is_empty() {
            f64::NAN
        } else {
            self.ages.iter().sum::<f64>() / self.ages.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    pipeline: Pipeline,
    obs_rng: SimRng,
    slot: u32,
    ages: Vec<f64>,
    /// Freshest processed packet per source not yet forwarded.
    waiting: Vec<Option<PacketRecord>>,
    link_rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OffloadEnv {
    cfg: EnvConfig,
    episode: Option<Episode>,
}

impl OffloadEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Self { cfg, episode: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn slot(&self) -> Option<u32> {
        self.episode.as_ref().map(|e| e.slot)
    }

    fn sample_link_rates(cfg: &EnvConfig, rng: &mut SimRng) -> Vec<f64> {
        let m = &cfg.model;
        let mut rates: Vec<f64> = m
            .sources
            .iter()
            .map(|s| shannon_rate(&s.uplink, sample_gain(&s.uplink, rng)))
            .collect();
        rates.push(shannon_rate(&m.downlink, sample_gain(&m.downlink, rng)));
        rates
    }

    fn observe(&self, e: &Episode) -> Vec<f64> {
        let m = &self.cfg.model;
        let sc = &self.cfg.scales;
        let j = m.num_sources();
        let mut s = Vec::with_capacity(self.cfg.state_dim());
        s.extend(m.sources.iter().map(|src| src.arrival_rate / sc.arrival_rate));
        s.extend(std::iter::repeat_n(m.edge_rate / sc.service_rate, j));
        s.push(m.fog_rate / sc.service_rate);
        s.extend(e.link_rates.iter().map(|r| r / sc.link_rate));
        s.extend(e.ages.iter().map(|a| a / sc.age));
        if self.cfg.time_feature {
            s.push(f64::from(self.cfg.slots - e.slot) / f64::from(self.cfg.slots));
        }
        s
    }
}

impl Environment for OffloadEnv {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    fn num_actions(&self) -> usize {
        self.cfg.num_actions()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let laws = PipelineLaws {
            service: self.cfg.service,
            uplink: self.cfg.uplink_law,
            downlink: self.cfg.downlink_law,
        };
        let pipeline = Pipeline::new(&self.cfg.model, laws, Downlink::Gated, seed::rng(seed))?;
        let mut obs_rng = seed::rng(seed::derive(seed, streams::OBSERVATION, 0));
        let link_rates = Self::sample_link_rates(&self.cfg, &mut obs_rng);
        let j = self.cfg.model.num_sources();
        let e = Episode {
            pipeline,
            obs_rng,
            slot: 0,
            ages: vec![0.0; j],
            waiting: vec![None; j],
            link_rates,
        };
        let state = self.observe(&e);
        self.episode = Some(e);
        Ok(state)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let bits = self.cfg.decode_action(action)?;
        let tau = self.cfg.slot_duration;
        let slots = self.cfg.slots;
        let e = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if e.slot >= slots {
            return Err(EnvError::Finished);
        }
        let slot_end = (e.slot + 1) as f64 * tau;
        let waiting = &mut e.waiting;
        e.pipeline.advance_to(slot_end, |out| {
            if let Output::Processed(rec) = out {
                let slot = &mut waiting[rec.source];
                if slot.is_none_or(|w| rec.generated > w.generated) {
                    *slot = Some(rec);
                }
            }
        });
        let mut forwarded = vec![false; bits.len()];
        for (j, age) in e.ages.iter_mut().enumerate() {
            *age += tau;
            if bits[j] {
                if let Some(rec) = e.waiting[j].take() {
                    let k = slot_end + rec.downlink_time - rec.generated;
                    *age = age.min(k);
                    forwarded[j] = true;
                }
            }
        }
        e.slot += 1;
        e.link_rates = Self::sample_link_rates(&self.cfg, &mut e.obs_rng);
        let total: f64 = e.ages.iter().sum();
        let scale = (bits.len() as f64) * slots as f64;
        let reward = match self.cfg.reward_sign {
            RewardSign::Negative => -total / scale,
            RewardSign::Positive => total / scale,
        };
        let done = e.slot == slots;
        let info = StepInfo {
            ages: e.ages.clone(),
            forwarded,
        };
        let e = self.episode.as_ref().expect("episode present");
        Ok(StepOutcome {
            state: self.observe(e),
            reward,
            done,
            info,
        })
    }
}

#[derive(Serialize)]
struct StepLine<'a> {
    slot: u32,
    action: usize,
    reward: f64,
    done: bool,
    ages: &'a [f64],
    forwarded: &'a [bool],
}

/// Writes one JSON object per step.
pub struct EpisodeLog<W: Write> {
    out: W,
    slot: u32,
}

impl<W: Write> EpisodeLog<W> {
    pub fn new(out: W) -> Self {
        Self { out, slot: 0 }
    }

    pub fn record(&mut self, action: usize, outcome: &StepOutcome) -> io::Result<()> {
        self.slot += 1;
        let line = StepLine {
            slot: self.slot,
            action,
            reward: outcome.reward,
            done: outcome.done,
            ages: &outcome.info.ages,
            forwarded: &outcome.info.forwarded,
        };
        serde_json::to_writer(&mut self.out, &line)?;
        self.out.write_all(b"\n")?;
        if outcome.done {
            self.slot = 0;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
