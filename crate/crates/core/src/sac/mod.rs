//! Allocation environment, reward shaping and a soft actor-critic learner.

mod agent;
mod buffer;
pub mod checkpoint;
mod env;
pub mod nn;
mod reward;
mod train;

pub use agent::{
    squash, squashed_density, squashed_log_prob, ActMode, AgentConfig, Batch, CriticLosses, SacAgent,
    SquashedSample, LOG_STD_MAX, LOG_STD_MIN, RHO_MAX,
};
pub use buffer::{ReplayBuffer, Transition};
pub use checkpoint::{load_agent, load_trainer, save_agent, save_trainer};
pub use env::{EnvConfig, NomaEnv, StepOutcome};
pub use reward::{compute_reward, reward_breakdown, RewardBreakdown, RewardConfig};
pub use train::{train, training_calls, EpisodeRecord, StopReason, Trainer};
