//! Epsilon-greedy deep Q-learning with experience replay and a target network.

mod replay;

pub use replay::{ReplayBuffer, Transition};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::net::{Example, Head, NetError, NetParams, NetShape, Optimizer, OptimizerKind, TargetParams};
use crate::seed::{self, streams, SimRng};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid training setting: {0}")]
    InvalidConfig(String),
    #[error("training diverged at update {update}: loss above {ceiling} for {patience} consecutive updates (last {last_loss})")]
    Diverged {
        update: u64,
        ceiling: f64,
        patience: u32,
        last_loss: f64,
        /// Losses of the offending run of updates.
        recent_losses: Vec<f64>,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: u32,
    /// Used only to size the exploration schedule.
    pub steps_per_episode: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the nominal step budget over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub target_sync_steps: u64,
    /// Transitions collected before the first update.
    pub warmup_transitions: usize,
    pub hidden: [usize; 2],
    pub optimizer: OptimizerKind,
    pub loss_ceiling: f64,
    pub divergence_patience: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            steps_per_episode: 10,
            learning_rate: 1e-4,
            batch_size: 128,
            replay_capacity: 100_000,
            gamma: 0.99,
            epsilon_start: 0.5,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.2,
            target_sync_steps: 200,
            warmup_transitions: 128,
            hidden: [256, 256],
            optimizer: OptimizerKind::Sgd,
            loss_ceiling: 1e8,
            divergence_patience: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_sync_steps == 0 {
            return bad("batch_size, replay_capacity and target_sync_steps must be positive");
        }
        if self.steps_per_episode == 0 || self.hidden.contains(&0) {
            return bad("steps_per_episode and hidden widths must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon must lie in [0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction must lie in [0, 1]");
        }
        if !(self.loss_ceiling > 0.0) || self.divergence_patience == 0 {
            return bad("loss_ceiling and divergence_patience must be positive");
        }
        Ok(())
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        let horizon = self.epsilon_decay_fraction
            * f64::from(self.episodes)
            * f64::from(self.steps_per_episode);
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.epsilon_end;
        }
        let frac = step as f64 / horizon;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Random action with probability `epsilon`, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(
    net: &NetParams,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, NetError> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.num_actions()));
    }
    Ok(argmax(&net.forward(state)?.q))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: u32,
    pub total_reward: f64,
    /// NaN when no update ran during the episode.
    pub mean_loss: f64,
    /// Mean over slots of the per-source average age; NaN if the
    /// environment reports no ages.
    pub mean_aoi: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeStats>,
    /// Loss of every gradient update in order.
    pub losses: Vec<f64>,
    pub target_syncs: u64,
    pub env_steps: u64,
}

impl TrainingLog {
    /// Mean loss of the first and last `fraction` of updates.
    pub fn loss_trend(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = ((self.losses.len() as f64) * fraction).floor() as usize;
        if n == 0 {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((
            mean(&self.losses[..n]),
            mean(&self.losses[self.losses.len() - n..]),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub log: TrainingLog,
    pub params: NetParams,
}

struct Learner {
    cfg: TrainConfig,
    params: NetParams,
    target: TargetParams,
    optimizer: Optimizer,
    replay: ReplayBuffer,
    rng: SimRng,
    steps: u64,
    over_ceiling: Vec<f64>,
}

impl Learner {
    fn update(&mut self, log: &mut TrainingLog) -> Result<f64, AgentError> {
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng);
        let dim = batch[0].next_state.len();
        let mut next = Array2::zeros((batch.len(), dim));
        for (i, t) in batch.iter().enumerate() {
            next.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state[..]));
        }
        let next_q = self.target.params().q_batch(&next)?;
        let examples: Vec<Example<'_>> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let target = if t.done {
                    t.reward
                } else {
                    let best = next_q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    t.reward + self.cfg.gamma * best
                };
                Example {
                    state: &t.state,
                    action: t.action,
                    target,
                }
            })
            .collect();
        let (loss, grads) = self.params.loss_and_gradient(&examples)?;
        self.optimizer.step(&mut self.params, &grads);
        log.losses.push(loss);

        if loss > self.cfg.loss_ceiling {
            self.over_ceiling.push(loss);
            if self.over_ceiling.len() >= self.cfg.divergence_patience as usize {
                return Err(AgentError::Diverged {
                    update: log.losses.len() as u64,
                    ceiling: self.cfg.loss_ceiling,
                    patience: self.cfg.divergence_patience,
                    last_loss: loss,
                    recent_losses: std::mem::take(&mut self.over_ceiling),
                });
            }
        } else {
            self.over_ceiling.clear();
        }
        Ok(loss)
    }
}

/// Trains a Q-network on `env`. Every random choice derives from `seed`.
pub fn train<E: Environment>(
    env: &mut E,
    cfg: &TrainConfig,
    head: Head,
    seed: u64,
) -> Result<Trained, AgentError> {
    cfg.validate()?;
    let shape = NetShape {
        inputs: env.state_dim(),
        hidden: cfg.hidden,
        actions: env.num_actions(),
        head,
    };
    let params = NetParams::init(shape, &mut seed::rng(seed::derive(seed, streams::INIT, 0)));
    let mut learner = Learner {
        cfg: cfg.clone(),
        target: TargetParams::new(&params),
        params,
        optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate),
        replay: ReplayBuffer::new(cfg.replay_capacity),
        rng: seed::rng(seed::derive(seed, streams::AGENT, 0)),
        steps: 0,
        over_ceiling: Vec::new(),
    };
    let mut log = TrainingLog::default();

    for episode in 0..cfg.episodes {
        let mut state = env.reset(seed::derive(seed, streams::TRAIN_EPISODE, u64::from(episode)))?;
        let epsilon = cfg.epsilon_at(learner.steps);
        let (mut total_reward, mut loss_sum, mut updates) = (0.0, 0.0, 0u32);
        let (mut age_sum, mut slots) = (0.0, 0u32);
        loop {
            let eps = cfg.epsilon_at(learner.steps);
            let action = select_action(&learner.params, &state, eps, &mut learner.rng)?;
            let out = env.step(action)?;
            total_reward += out.reward;
            age_sum += out.info.mean_age();
            slots += 1;
            learner.replay.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward,
                next_state: out.state.clone(),
                done: out.done,
            });
            learner.steps += 1;
            log.env_steps += 1;

            if learner.replay.len() >= cfg.warmup_transitions.max(1) {
                loss_sum += learner.update(&mut log)?;
                updates += 1;
            }
            if learner.steps.is_multiple_of(cfg.target_sync_steps) {
                learner.target.sync(&learner.params);
                log.target_syncs += 1;
            }
            state = out.state;
            if out.done {
                break;
            }
        }
        log.episodes.push(EpisodeStats {
            episode,
            total_reward,
            mean_loss: if updates > 0 { loss_sum / f64::from(updates) } else { f64::NAN },
            mean_aoi: age_sum / f64::from(slots),
            epsilon,
        });
    }
    Ok(Trained {
        log,
        params: learner.params,
    })
}

pub enum Policy<'a> {
    Greedy(&'a NetParams),
    /// Uniform random actions from a dedicated stream of the seed.
    Random,
    /// The same action every slot.
    Constant(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_aoi: f64,
    pub mean_reward: f64,
    pub episode_aoi: Vec<f64>,
    pub episode_reward: Vec<f64>,
}

/// Runs `episodes` episodes whose environment seeds depend only on `seed`,
/// so different policies see identical channel and arrival draws.
pub fn evaluate<E: Environment>(
    env: &mut E,
    policy: &Policy<'_>,
    episodes: u32,
    seed: u64,
) -> Result<Evaluation, AgentError> {
    let mut rng = seed::rng(seed::derive(seed, streams::RANDOM_POLICY, 0));
    let mut episode_aoi = Vec::with_capacity(episodes as usize);
    let mut episode_reward = Vec::with_capacity(episodes as usize);
    for e in 0..episodes {
        let mut state = env.reset(seed::derive(seed, streams::EVAL_EPISODE, u64::from(e)))?;
        let (mut ages, mut reward, mut slots) = (0.0, 0.0, 0u32);
        loop {
            let action = match policy {
                Policy::Greedy(p) => argmax(&p.forward(&state)?.q),
                Policy::Random => rng.random_range(0..env.num_actions()),
                Policy::Constant(a) => *a,
            };
            let out = env.step(action)?;
            ages += out.info.mean_age();
            reward += out.reward;
            slots += 1;
            state = out.state;
            if out.done {
                break;
            }
        }
        episode_aoi.push(ages / f64::from(slots));
        episode_reward.push(reward);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(Evaluation {
        mean_aoi: mean(&episode_aoi),
        mean_reward: mean(&episode_reward),
        episode_aoi,
        episode_reward,
    })
}
