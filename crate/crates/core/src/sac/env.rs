use std::sync::Arc;

use rand::Rng;

use super::reward::{reward_breakdown, RewardBreakdown, RewardConfig};
use crate::channel::{ChannelBounds, ChannelPair};
use crate::error::{Error, Result};
use crate::link::{LinkModel, LinkReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub bounds: ChannelBounds,
    pub max_steps: u32,
    pub success_bonus: f64,
    pub failure_penalty: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            bounds: ChannelBounds::default(),
            max_steps: 500,
            success_bonus: 50.0,
            failure_penalty: -100.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate().map_err(|e| Error::config(e.to_string()))?;
        if self.max_steps == 0 {
            return Err(Error::config("episodes need at least one step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: f64,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub components: RewardBreakdown,
    pub report: LinkReport,
}

/// Episodic two-user allocation task. The channel pair is drawn at reset and
/// stays fixed for the episode, so the next state always equals the state.
#[derive(Debug, Clone)]
pub struct NomaEnv {
    link: Arc<LinkModel>,
    config: EnvConfig,
    reward: RewardConfig,
    pair: Option<ChannelPair>,
    steps: u32,
}

impl NomaEnv {
    pub fn new(link: Arc<LinkModel>, config: EnvConfig, reward: RewardConfig) -> Result<Self> {
        config.validate()?;
        reward.validate()?;
        Ok(Self {
            link,
            config,
            reward,
            pair: None,
            steps: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn pair(&self) -> Option<ChannelPair> {
        self.pair
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Current state, the gain ratio of the episode's channel pair.
    pub fn state(&self) -> Option<f64> {
        self.pair.map(|p| p.ratio())
    }

    /// Draws `r ~ U(0, 1]` and a channel pair with that ratio.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let r = 1.0 - rng.random::<f64>();
        let pair = self.config.bounds.sample_pair(r, rng)?;
        self.pair = Some(pair);
        self.steps = 0;
        Ok(pair.ratio())
    }

    /// Restores an episode in progress.
    pub fn restore(&mut self, pair: Option<ChannelPair>, steps: u32) {
        self.pair = pair;
        self.steps = steps;
    }

    /// Applies allocation `rho`; `ber_key` selects the Monte Carlo substream.
    pub fn step(&mut self, rho: f64, ber_key: u64) -> Result<StepOutcome> {
        let pair = self
            .pair
            .ok_or_else(|| Error::Precondition("step called before reset".into()))?;
        if !(0.0..=0.5).contains(&rho) {
            return Err(Error::domain(format!("allocation {rho} outside [0, 0.5]")));
        }
        let cfg = self.link.config();
        let report = self.link.evaluate(&pair, rho, cfg.snr_db, cfg.mc_symbols_train, ber_key)?;
        self.steps += 1;
        let components = reward_breakdown(&report, rho, &self.reward);
        let mut reward = components.total();
        let success = report.jain >= self.reward.fairness_target;
        let mut done = false;
        if success {
            reward += self.config.success_bonus;
            done = true;
        } else if self.steps >= self.config.max_steps {
            reward += self.config.failure_penalty;
            done = true;
        }
        Ok(StepOutcome {
            next_state: pair.ratio(),
            reward,
            done,
            success,
            components,
            report,
        })
    }
}
