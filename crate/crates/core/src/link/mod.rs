//! CSK constellation, NOMA superposition, SIC detection and link metrics.

mod constellation;
mod metrics;
mod model;

pub use constellation::{default_constellation, superpose, CskConstellation};
pub use metrics::{capacity, jain_index, throughput};
pub use model::{snr_linear, LinkModel, UserPowers, MIN_MC_SYMBOLS};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub bandwidth_hz: f64,
    pub snr_db: f64,
    /// Monte Carlo symbols per evaluation.
    pub mc_symbols: usize,
    /// Monte Carlo symbols per training step.
    pub mc_symbols_train: usize,
    pub responsivity_a_per_w: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 3.0e7,
            snr_db: 10.0,
            mc_symbols: 100_000,
            mc_symbols_train: 20_000,
            responsivity_a_per_w: 0.54,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !(self.responsivity_a_per_w > 0.0) {
            return Err(Error::config("bandwidth and responsivity must be positive"));
        }
        if self.snr_db.is_nan() {
            return Err(Error::config("SNR must be a number"));
        }
        if self.mc_symbols < MIN_MC_SYMBOLS || self.mc_symbols_train < MIN_MC_SYMBOLS {
            return Err(Error::config(format!(
                "Monte Carlo budgets must be at least {MIN_MC_SYMBOLS} symbols"
            )));
        }
        Ok(())
    }
}

/// Per-user outcome of one allocation decision. Index 0 is the stronger user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkReport {
    pub sinr: [f64; 2],
    pub capacity_bps: [f64; 2],
    pub ber: [f64; 2],
    pub throughput_bps: [f64; 2],
    pub jain: f64,
    pub sum_rate_bps: f64,
}
