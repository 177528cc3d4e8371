use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;

use super::agent::{ActMode, AgentConfig, Batch, SacAgent, RHO_MAX};
use super::buffer::{ReplayBuffer, Transition};
use super::env::NomaEnv;
use crate::error::Result;
use crate::rng::{stream_key, substream, tag};

/// Summary of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub episode_return: f64,
    pub steps: u32,
    pub terminal_jain: f64,
    pub rolling_avg_return: f64,
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    EpisodeLimit,
}

/// Resumable training loop. All randomness comes from counter-addressed
/// substreams of the seed, so a restored trainer continues bit for bit.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub agent: SacAgent,
    pub env: NomaEnv,
    pub buffer: ReplayBuffer,
    pub seed: u64,
    pub total_steps: u64,
    pub episodes_done: u64,
    pub episode_return: f64,
    pub history: Vec<EpisodeRecord>,
    pub(crate) window: VecDeque<f64>,
}

impl Trainer {
    pub fn new(env: NomaEnv, config: AgentConfig, seed: u64) -> Result<Self> {
        let agent = SacAgent::new(config, &mut substream(seed, &[tag::INIT]))?;
        let buffer = ReplayBuffer::new(agent.config.buffer_capacity);
        Ok(Self {
            agent,
            env,
            buffer,
            seed,
            total_steps: 0,
            episodes_done: 0,
            episode_return: 0.0,
            history: Vec::new(),
            window: VecDeque::new(),
        })
    }

    /// Mean return over the most recent full-or-partial score window.
    pub fn rolling_average(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        let cfg = &self.agent.config;
        if self.window.len() >= cfg.score_window && self.rolling_average() >= cfg.stop_value {
            Some(StopReason::TargetReached)
        } else if self.episodes_done >= cfg.max_episodes as u64 {
            Some(StopReason::EpisodeLimit)
        } else {
            None
        }
    }

    /// Executes one environment step plus the scheduled gradient updates.
    /// Returns the episode record when the step ended an episode.
    pub fn step(&mut self) -> Result<Option<EpisodeRecord>> {
        note_training_call();
        let state = match self.env.state() {
            Some(s) => s,
            None => {
                let mut rng = substream(self.seed, &[tag::ENV_RESET, self.episodes_done]);
                self.env.reset(&mut rng)?
            }
        };
        let mut rng = substream(self.seed, &[tag::ACTION, self.total_steps]);
        let action = if self.total_steps < self.agent.config.warmup_steps {
            rng.random_range(0.0..=RHO_MAX)
        } else {
            self.agent.act(state, ActMode::Stochastic, &mut rng)
        };
        let ber_key = stream_key(self.seed, &[tag::STEP_BER, self.total_steps]);
        let out = self.env.step(action, ber_key)?;
        self.buffer.push(Transition {
            state,
            action,
            reward: out.reward,
            next_state: out.next_state,
            done: out.done,
        });
        self.total_steps += 1;
        self.episode_return += out.reward;

        if self.total_steps > self.agent.config.warmup_steps
            && self.buffer.len() >= self.agent.config.batch_size
        {
            for _ in 0..self.agent.config.updates_per_step {
                self.update_once()?;
            }
        }

        if !out.done {
            return Ok(None);
        }
        let record = self.finish_episode(out.report.jain);
        Ok(Some(record))
    }

    fn update_once(&mut self) -> Result<()> {
        let u = self.agent.update_count;
        let m = self.agent.config.batch_size;
        let sample = self.buffer.sample(m, &mut substream(self.seed, &[tag::BATCH, u]));
        let batch = Batch::from_transitions(&sample);
        let draw = |t: u64| -> Vec<f64> {
            let mut rng = substream(self.seed, &[t, u]);
            (0..m).map(|_| rng.sample(StandardNormal)).collect()
        };
        let next_eps = draw(tag::CRITIC_NOISE);
        let actor_eps = draw(tag::ACTOR_NOISE);
        self.agent.update(&batch, &next_eps, &actor_eps)?;
        Ok(())
    }

    fn finish_episode(&mut self, terminal_jain: f64) -> EpisodeRecord {
        let ret = self.episode_return;
        self.window.push_back(ret);
        if self.window.len() > self.agent.config.score_window {
            self.window.pop_front();
        }
        let record = EpisodeRecord {
            episode: self.episodes_done + 1,
            episode_return: ret,
            steps: self.env.steps(),
            terminal_jain,
            rolling_avg_return: self.rolling_average(),
        };
        self.history.push(record);
        self.episodes_done += 1;
        self.episode_return = 0.0;
        self.env.restore(None, 0);
        record
    }

    /// Runs until the score target or the episode limit.
    pub fn run(&mut self) -> Result<StopReason> {
        loop {
            if let Some(reason) = self.stop_reason() {
                return Ok(reason);
            }
            self.step()?;
        }
    }

    /// Rebuilds the score window from the stored history.
    pub(crate) fn rebuild_window(&mut self) {
        let w = self.agent.config.score_window;
        let start = self.history.len().saturating_sub(w);
        self.window = self.history[start..].iter().map(|r| r.episode_return).collect();
    }
}

static TRAINING_CALLS: AtomicU64 = AtomicU64::new(0);

pub(crate) fn note_training_call() {
    TRAINING_CALLS.fetch_add(1, Ordering::Relaxed);
}

/// Process-wide count of trainer steps and gradient updates, for checking
/// that an evaluation never trains.
pub fn training_calls() -> u64 {
    TRAINING_CALLS.load(Ordering::Relaxed)
}

/// Trains an agent from scratch with the given seed.
pub fn train(env: NomaEnv, config: AgentConfig, seed: u64) -> Result<(Trainer, StopReason)> {
    let mut trainer = Trainer::new(env, config, seed)?;
    let reason = trainer.run()?;
    Ok((trainer, reason))
}
