use rand::Rng;
use rand_distr::StandardNormal;

use super::buffer::Transition;
use super::nn::{soft_update, Adam, Mlp};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Upper end of the action range `[0, RHO_MAX]`.
pub const RHO_MAX: f64 = 0.5;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub max_episodes: usize,
    pub score_window: usize,
    pub stop_value: f64,
    pub hidden: Vec<usize>,
    pub warmup_steps: u64,
    pub updates_per_step: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 1.0,
            tau: 1e-3,
            learning_rate: 3e-4,
            buffer_capacity: 10_000,
            batch_size: 64,
            max_episodes: 1000,
            score_window: 100,
            stop_value: 163.0,
            hidden: vec![64, 64],
            warmup_steps: 1000,
            updates_per_step: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.adam_eps > 0.0 && self.alpha >= 0.0) {
            return Err(Error::config("learning rate and Adam epsilon must be positive, alpha non-negative"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("discount and smoothing factor must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("Adam decay constants must lie in [0, 1)"));
        }
        if self.buffer_capacity == 0
            || self.batch_size == 0
            || self.max_episodes == 0
            || self.score_window == 0
            || self.hidden.is_empty()
            || self.hidden.contains(&0)
        {
            return Err(Error::config("agent sizes must be positive"));
        }
        Ok(())
    }
}

/// Action-selection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Squashed Gaussian sample with its log-density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashedSample {
    pub rho: f64,
    pub log_prob: f64,
    /// Pre-squash value `u = μ + σ·ε`.
    pub u: f64,
}

/// `ρ = 0.25·(tanh u + 1)`.
pub fn squash(u: f64) -> f64 {
    0.25 * (u.tanh() + 1.0)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh²u)`, stable for large `|u|`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of the squashed action for standard-normal draw `eps`.
pub fn squashed_log_prob(u: f64, eps: f64, log_std: f64) -> f64 {
    -0.5 * eps * eps - log_std - HALF_LN_2PI - 0.25f64.ln() - log_one_minus_tanh_sq(u)
}

/// Density of `ρ` under the squashed policy with pre-squash mean `mu` and
/// log standard deviation `log_std`.
pub fn squashed_density(rho: f64, mu: f64, log_std: f64) -> f64 {
    if !(rho > 0.0 && rho < RHO_MAX) {
        return 0.0;
    }
    let t = 4.0 * rho - 1.0;
    let u = t.atanh();
    let eps = (u - mu) / log_std.exp();
    squashed_log_prob(u, eps, log_std).exp()
}

/// A batch of transitions in structure-of-arrays form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Self {
        Self {
            states: ts.iter().map(|t| t.state).collect(),
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: ts.iter().map(|t| t.next_state).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub q1: f64,
    pub q2: f64,
}

/// Soft actor-critic agent for a scalar state and a scalar action in `[0, 0.5]`.
///
/// The actor outputs the pre-squash mean and log standard deviation. Inputs are
/// rescaled to roughly `[-1, 1]`: states by `2s - 1`, actions by `4a - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub config: AgentConfig,
    pub actor_net: Mlp,
    pub critic_net: Mlp,
    pub actor: Vec<f64>,
    pub critics: [Vec<f64>; 2],
    pub targets: [Vec<f64>; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    /// Number of completed gradient updates.
    pub update_count: u64,
}

fn actor_input(state: f64) -> [f64; 1] {
    [2.0 * state - 1.0]
}

fn critic_input(state: f64, action: f64) -> [f64; 2] {
    [2.0 * state - 1.0, 4.0 * action - 1.0]
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut actor_sizes = vec![1];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(2);
        let mut critic_sizes = vec![2];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let actor_net = Mlp::new(actor_sizes)?;
        let critic_net = Mlp::new(critic_sizes)?;
        let actor = actor_net.init(rng);
        let q1 = critic_net.init(rng);
        let q2 = critic_net.init(rng);
        let adam = |n| Adam::new(n, config.adam_beta1, config.adam_beta2, config.adam_eps);
        Ok(Self {
            actor_opt: adam(actor.len()),
            critic_opts: [adam(q1.len()), adam(q2.len())],
            targets: [q1.clone(), q2.clone()],
            critics: [q1, q2],
            actor,
            actor_net,
            critic_net,
            config,
            update_count: 0,
        })
    }

    /// Pre-squash mean and (clamped) log standard deviation at `state`.
    pub fn policy_head(&self, state: f64) -> (f64, f64) {
        head(&self.actor_net, &self.actor, state)
    }

    pub fn act_deterministic(&self, state: f64) -> f64 {
        squash(self.policy_head(state).0)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: f64, mode: ActMode, rng: &mut R) -> f64 {
        match mode {
            ActMode::Deterministic => self.act_deterministic(state),
            ActMode::Stochastic => self.sample(state, rng.sample(StandardNormal)).rho,
        }
    }

    /// Reparameterised sample for a given standard-normal draw.
    pub fn sample(&self, state: f64, eps: f64) -> SquashedSample {
        let (mu, log_std) = self.policy_head(state);
        let u = mu + log_std.exp() * eps;
        SquashedSample {
            rho: squash(u),
            log_prob: squashed_log_prob(u, eps, log_std),
            u,
        }
    }

    pub fn q_value(&self, params: &[f64], state: f64, action: f64) -> f64 {
        self.critic_net.output(params, &critic_input(state, action))[0]
    }

    /// Bootstrapped critic targets for a batch, one standard-normal draw per
    /// transition for the next action.
    pub fn critic_targets(&self, batch: &Batch, next_eps: &[f64]) -> Vec<f64> {
        let c = &self.config;
        (0..batch.len())
            .map(|k| {
                if batch.dones[k] {
                    return batch.rewards[k];
                }
                let s2 = batch.next_states[k];
                let next = self.sample(s2, next_eps[k]);
                let q = self
                    .q_value(&self.targets[0], s2, next.rho)
                    .min(self.q_value(&self.targets[1], s2, next.rho));
                batch.rewards[k] + c.gamma * (q - c.alpha * next.log_prob)
            })
            .collect()
    }

    /// Mean squared error of critic `params` against `targets` and its gradient.
    pub fn critic_loss_and_grad(&self, params: &[f64], batch: &Batch, targets: &[f64]) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for k in 0..batch.len() {
            let cache = self.critic_net.forward(params, &critic_input(batch.states[k], batch.actions[k]));
            let err = cache.output()[0] - targets[k];
            loss += err * err / n;
            self.critic_net.backward(params, &cache, &[2.0 * err / n], Some(&mut grad));
        }
        (loss, grad)
    }

    /// Actor loss `mean(α·log π(ã|s) - min_j Q_j(s, ã))` with reparameterised
    /// actions, and its gradient with respect to `params`.
    pub fn actor_loss_and_grad(&self, params: &[f64], batch: &Batch, eps: &[f64]) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let alpha = self.config.alpha;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for k in 0..batch.len() {
            let s = batch.states[k];
            let cache = self.actor_net.forward(params, &actor_input(s));
            let (mu, raw_log_std) = (cache.output()[0], cache.output()[1]);
            let log_std = raw_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let sigma = log_std.exp();
            let e = eps[k];
            let u = mu + sigma * e;
            let t = u.tanh();
            let rho = 0.25 * (t + 1.0);
            let log_prob = squashed_log_prob(u, e, log_std);

            let (q, dq_drho) = self.min_q_with_action_grad(s, rho);
            loss += (alpha * log_prob - q) / n;

            let drho_du = 0.25 * (1.0 - t * t);
            let d_mu = alpha * 2.0 * t - dq_drho * drho_du;
            let mut d_log_std = alpha * (-1.0 + 2.0 * t * sigma * e) - dq_drho * drho_du * sigma * e;
            if raw_log_std != log_std {
                d_log_std = 0.0;
            }
            self.actor_net
                .backward(params, &cache, &[d_mu / n, d_log_std / n], Some(&mut grad));
        }
        (loss, grad)
    }

    /// Smaller of the two critics at `(s, a)` and its derivative in `a`.
    fn min_q_with_action_grad(&self, state: f64, action: f64) -> (f64, f64) {
        let x = critic_input(state, action);
        let c1 = self.critic_net.forward(&self.critics[0], &x);
        let c2 = self.critic_net.forward(&self.critics[1], &x);
        let (params, cache) = if c2.output()[0] < c1.output()[0] {
            (&self.critics[1], c2)
        } else {
            (&self.critics[0], c1)
        };
        let dx = self.critic_net.backward(params, &cache, &[1.0], None);
        (cache.output()[0], 4.0 * dx[1])
    }

    /// One gradient step on both critics.
    pub fn critic_update(&mut self, batch: &Batch, next_eps: &[f64]) -> Result<CriticLosses> {
        if batch.is_empty() {
            return Err(Error::Precondition("critic update needs a non-empty batch".into()));
        }
        let targets = self.critic_targets(batch, next_eps);
        let lr = self.config.learning_rate;
        let mut losses = [0.0; 2];
        for j in 0..2 {
            let (loss, grad) = self.critic_loss_and_grad(&self.critics[j], batch, &targets);
            self.critic_opts[j].step(&mut self.critics[j], &grad, lr);
            losses[j] = loss;
        }
        Ok(CriticLosses {
            q1: losses[0],
            q2: losses[1],
        })
    }

    /// One gradient step on the actor.
    pub fn actor_update(&mut self, batch: &Batch, eps: &[f64]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Precondition("actor update needs a non-empty batch".into()));
        }
        let (loss, grad) = self.actor_loss_and_grad(&self.actor, batch, eps);
        self.actor_opt.step(&mut self.actor, &grad, self.config.learning_rate);
        Ok(loss)
    }

    /// Moves both target critics toward the online critics.
    pub fn soft_update_targets(&mut self) -> Result<()> {
        for j in 0..2 {
            soft_update(&mut self.targets[j], &self.critics[j], self.config.tau)?;
        }
        Ok(())
    }

    /// Critic step, actor step and target update on one batch.
    pub fn update(&mut self, batch: &Batch, next_eps: &[f64], actor_eps: &[f64]) -> Result<(CriticLosses, f64)> {
        super::train::note_training_call();
        let c = self.critic_update(batch, next_eps)?;
        let a = self.actor_update(batch, actor_eps)?;
        self.soft_update_targets()?;
        self.update_count += 1;
        Ok((c, a))
    }
}

fn head(net: &Mlp, params: &[f64], state: f64) -> (f64, f64) {
    let out = net.output(params, &actor_input(state));
    (out[0], out[1].clamp(LOG_STD_MIN, LOG_STD_MAX))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn agent(seed: u64) -> SacAgent {
        SacAgent::new(AgentConfig::default(), &mut substream(seed, &[7])).unwrap()
    }

    fn fixed_batch(n: usize) -> (Batch, Vec<f64>) {
        let mut rng = substream(5, &[1]);
        let ts: Vec<Transition> = (0..n)
            .map(|k| Transition {
                state: rng.random_range(0.0..1.0),
                action: rng.random_range(0.0..0.5),
                reward: rng.random_range(-20.0..150.0),
                next_state: rng.random_range(0.0..1.0),
                done: k % 3 == 0,
            })
            .collect();
        let eps = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (Batch::from_transitions(&ts), eps)
    }

    fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        diff / norm
    }

    #[test]
    fn zero_mean_gives_quarter() {
        let mut a = agent(1);
        let n = a.actor.len();
        a.actor.iter_mut().for_each(|p| *p = 0.0);
        a.actor[n - 1] = -1.0;
        assert_eq!(a.act_deterministic(0.3), 0.25);
    }

    #[test]
    fn deterministic_actions_repeat() {
        let a = agent(2);
        assert_eq!(a.act_deterministic(0.5), a.act_deterministic(0.5));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let a = agent(3);
        let (batch, _) = fixed_batch(8);
        let targets: Vec<f64> = batch.rewards.clone();
        let (_, grad) = a.critic_loss_and_grad(&a.critics[0], &batch, &targets);
        let h = 1e-6;
        let fd: Vec<f64> = (0..grad.len())
            .map(|k| {
                let mut p = a.critics[0].clone();
                p[k] += h;
                let up = a.critic_loss_and_grad(&p, &batch, &targets).0;
                p[k] -= 2.0 * h;
                let down = a.critic_loss_and_grad(&p, &batch, &targets).0;
                (up - down) / (2.0 * h)
            })
            .collect();
        assert!(relative_gap(&grad, &fd) < 1e-4);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let a = agent(4);
        let (batch, eps) = fixed_batch(8);
        let (_, grad) = a.actor_loss_and_grad(&a.actor, &batch, &eps);
        let h = 1e-6;
        let fd: Vec<f64> = (0..grad.len())
            .map(|k| {
                let mut p = a.actor.clone();
                p[k] += h;
                let up = a.actor_loss_and_grad(&p, &batch, &eps).0;
                p[k] -= 2.0 * h;
                let down = a.actor_loss_and_grad(&p, &batch, &eps).0;
                (up - down) / (2.0 * h)
            })
            .collect();
        assert!(relative_gap(&grad, &fd) < 1e-4);
    }

    #[test]
    fn targets_without_discount_are_rewards() {
        let mut a = agent(5);
        a.config.gamma = 0.0;
        let (batch, eps) = fixed_batch(8);
        assert_eq!(a.critic_targets(&batch, &eps), batch.rewards);
    }

    #[test]
    fn terminal_targets_ignore_next_state() {
        let a = agent(6);
        let (mut batch, eps) = fixed_batch(8);
        batch.dones = vec![true; 8];
        assert_eq!(a.critic_targets(&batch, &eps), batch.rewards);
    }

    #[test]
    fn targets_use_the_smaller_critic() {
        let mut a = agent(7);
        for (j, value) in [(0, 2.0), (1, 1.0)] {
            let t = &mut a.targets[j];
            t.iter_mut().for_each(|p| *p = 0.0);
            let n = t.len();
            t[n - 1] = value;
        }
        let (mut batch, eps) = fixed_batch(8);
        batch.dones = vec![false; 8];
        let y = a.critic_targets(&batch, &eps);
        for k in 0..8 {
            let lp = a.sample(batch.next_states[k], eps[k]).log_prob;
            let expected = batch.rewards[k] + a.config.gamma * (1.0 - a.config.alpha * lp);
            assert!((y[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        for (mu, log_std) in [(0.0, 0.0), (0.7, -1.0), (-1.5, 0.5), (0.2, -2.5)] {
            let n = 200_000;
            let h = RHO_MAX / n as f64;
            let total: f64 = (0..n).map(|k| squashed_density((k as f64 + 0.5) * h, mu, log_std) * h).sum();
            assert!((total - 1.0).abs() < 1e-3, "{mu} {log_std}: {total}");
        }
    }

    #[test]
    fn alpha_zero_drops_entropy_from_actor_loss() {
        let mut a = agent(8);
        a.config.alpha = 0.0;
        let (batch, eps) = fixed_batch(8);
        let (loss, _) = a.actor_loss_and_grad(&a.actor, &batch, &eps);
        let expected: f64 = (0..8)
            .map(|k| {
                let s = a.sample(batch.states[k], eps[k]);
                -a.q_value(&a.critics[0], batch.states[k], s.rho)
                    .min(a.q_value(&a.critics[1], batch.states[k], s.rho))
            })
            .sum::<f64>()
            / 8.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut a = agent(9);
        assert!(matches!(a.critic_update(&Batch::default(), &[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn targets_start_equal_to_critics() {
        let a = agent(10);
        assert_eq!(a.targets, a.critics);
    }

    proptest! {
        #[test]
        fn actions_stay_in_range(seed in any::<u64>(), s in 0.0f64..=1.0, eps in -50.0f64..50.0, scale in 0.1f64..100.0) {
            let mut a = agent(seed);
            a.actor.iter_mut().for_each(|p| *p *= scale);
            let d = a.act_deterministic(s);
            let r = a.sample(s, eps).rho;
            prop_assert!((0.0..=RHO_MAX).contains(&d));
            prop_assert!((0.0..=RHO_MAX).contains(&r));
        }
    }
}
