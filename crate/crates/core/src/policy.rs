//! Power-allocation rules shared by the baselines and the learned agent.

use std::fmt;
use std::str::FromStr;

use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::link::{LinkModel, LinkReport};
use crate::sac::SacAgent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Sac,
    Grpa,
    Ngdpa,
    Tdma,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::Sac, Self::Grpa, Self::Ngdpa, Self::Tdma];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sac => "sac",
            Self::Grpa => "grpa",
            Self::Ngdpa => "ngdpa",
            Self::Tdma => "tdma",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sac" => Ok(Self::Sac),
            "grpa" => Ok(Self::Grpa),
            "ngdpa" => Ok(Self::Ngdpa),
            "tdma" => Ok(Self::Tdma),
            other => Err(Error::config(format!("unknown policy '{other}'"))),
        }
    }
}

/// Parses a comma-separated policy list, keeping order and dropping repeats.
pub fn parse_policy_list(s: &str) -> Result<Vec<PolicyKind>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let p: PolicyKind = part.parse()?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(Error::config("empty policy list"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationDecision {
    /// Superposition with power fraction `rho1` for the stronger user.
    Noma { rho1: f64 },
    /// Equal time slots at full power.
    TimeSplit,
}

impl AllocationDecision {
    pub fn rho1(&self) -> Option<f64> {
        match self {
            Self::Noma { rho1 } => Some(*rho1),
            Self::TimeSplit => None,
        }
    }
}

/// Gain-ratio allocation `1 / (1 + (h1/h2)²)`.
pub fn grpa(pair: &ChannelPair) -> f64 {
    let q = pair.h1() / pair.h2();
    1.0 / (1.0 + q * q)
}

/// Normalised gain-difference allocation `d / (d + h1)` with `d = |h1 - h2|`.
pub fn ngdpa(pair: &ChannelPair) -> f64 {
    let d = (pair.h1() - pair.h2()).abs();
    d / (d + pair.h1())
}

/// Decision of `policy` at `pair`; the learned policy acts deterministically.
pub fn apply_policy(policy: PolicyKind, pair: &ChannelPair, agent: Option<&SacAgent>) -> Result<AllocationDecision> {
    let rho1 = match policy {
        PolicyKind::Grpa => grpa(pair),
        PolicyKind::Ngdpa => ngdpa(pair),
        PolicyKind::Tdma => return Ok(AllocationDecision::TimeSplit),
        PolicyKind::Sac => agent
            .ok_or_else(|| Error::config("policy 'sac' needs a trained agent checkpoint"))?
            .act_deterministic(pair.ratio()),
    };
    Ok(AllocationDecision::Noma { rho1 })
}

/// TDMA baseline report.
pub fn tdma_eval(link: &LinkModel, pair: &ChannelPair, snr_db: f64, n_symbols: usize, key: u64) -> Result<LinkReport> {
    link.tdma(pair, snr_db, n_symbols, key)
}

/// Evaluates a decision: NOMA decisions go through the SIC link, time splits through TDMA.
pub fn evaluate_decision(
    link: &LinkModel,
    pair: &ChannelPair,
    decision: AllocationDecision,
    snr_db: f64,
    n_symbols: usize,
    key: u64,
) -> Result<LinkReport> {
    match decision {
        AllocationDecision::Noma { rho1 } => link.evaluate(pair, rho1, snr_db, n_symbols, key),
        AllocationDecision::TimeSplit => tdma_eval(link, pair, snr_db, n_symbols, key),
    }
}
