use crate::error::{Error, Result};
use crate::link::LinkReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub fairness_target: f64,
    pub fairness_bonus: f64,
    pub fairness_penalty: f64,
    /// Weight of the sum rate expressed in units of 100 Mbit/s.
    pub sum_rate_weight: f64,
    pub ber_threshold: f64,
    pub ber_penalty: f64,
    pub power_scale: f64,
    pub power_center: f64,
    pub stability_bonus: f64,
    pub stability_penalty: f64,
    pub stability_band: (f64, f64),
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            fairness_target: 0.99,
            fairness_bonus: 100.0,
            fairness_penalty: 50.0,
            sum_rate_weight: 0.3,
            ber_threshold: 1e-3,
            ber_penalty: -20.0,
            power_scale: 10.0,
            power_center: 0.25,
            stability_bonus: 5.0,
            stability_penalty: -10.0,
            stability_band: (0.01, 0.49),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fairness_target > 0.0 && self.fairness_target <= 1.0) {
            return Err(Error::config("fairness target must lie in (0, 1]"));
        }
        if self.stability_band.0 > self.stability_band.1 || !(self.ber_threshold >= 0.0) {
            return Err(Error::config("invalid reward band or threshold"));
        }
        Ok(())
    }
}

/// The five reward components of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub fairness: f64,
    pub sum_rate: f64,
    pub ber: f64,
    pub power: f64,
    pub stability: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.fairness + self.sum_rate + self.ber + self.power + self.stability
    }
}

pub fn reward_breakdown(report: &LinkReport, rho: f64, cfg: &RewardConfig) -> RewardBreakdown {
    let j = report.jain;
    let fairness = if j >= cfg.fairness_target {
        cfg.fairness_bonus
    } else {
        -cfg.fairness_penalty * (cfg.fairness_target - j).powi(2)
    };
    let ber = if report.ber.iter().any(|b| *b > cfg.ber_threshold) {
        cfg.ber_penalty
    } else {
        0.0
    };
    let (lo, hi) = cfg.stability_band;
    RewardBreakdown {
        fairness,
        sum_rate: cfg.sum_rate_weight * report.sum_rate_bps / 1e8,
        ber,
        power: cfg.power_scale * (1.0 - (rho - cfg.power_center).abs()),
        stability: if (lo..=hi).contains(&rho) {
            cfg.stability_bonus
        } else {
            cfg.stability_penalty
        },
    }
}

pub fn compute_reward(report: &LinkReport, rho: f64, cfg: &RewardConfig) -> f64 {
    reward_breakdown(report, rho, cfg).total()
}
