use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::constellation::CskConstellation;
use super::metrics::{capacity, jain_index, throughput};
use super::{LinkConfig, LinkReport};
use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::rng::{rng_from_key, stream_key, tag};
use crate::spectral::{PowerMatrix, SpectralModel};

/// Smallest Monte Carlo budget accepted by the BER simulator.
pub const MIN_MC_SYMBOLS: usize = 1000;
const CHUNK: usize = 4096;

/// Per-user electrical power terms entering the SINR.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UserPowers {
    pub signal: f64,
    pub cross_color: f64,
    pub inter_user: f64,
    pub noise: f64,
}

impl UserPowers {
    pub fn sinr(&self) -> f64 {
        if self.signal <= 0.0 {
            return 0.0;
        }
        self.signal / (self.cross_color + self.inter_user + self.noise)
    }
}

/// Linear SNR from decibels.
pub fn snr_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Squared photocurrents of one component matrix: the desired diagonal, the
/// cross-colour leakage, and everything the matrix puts on every branch.
fn electrical_terms(p: &PowerMatrix, responsivity: f64) -> (f64, f64, f64) {
    let mut desired = 0.0;
    let mut leak = 0.0;
    let mut total = 0.0;
    for j in 0..3 {
        let column: f64 = (0..3).map(|i| p.entries[i][j]).sum();
        let diag = p.entries[j][j];
        desired += (responsivity * diag).powi(2);
        leak += (responsivity * (column - diag)).powi(2);
        total += (responsivity * column).powi(2);
    }
    (desired, leak, total)
}

/// NOMA-CSK link between one luminaire and two users.
///
/// The stronger user (index 0) receives the fraction `ρ` of the optical power
/// and removes the weaker user's signal by SIC. The weaker user (index 1)
/// treats the stronger user's signal as interference.
#[derive(Debug, Clone)]
pub struct LinkModel {
    spectral: SpectralModel,
    constellation: CskConstellation,
    config: LinkConfig,
    /// Branch photocurrents per symbol at unit gain.
    responses: Vec<[f64; 3]>,
    mean_response: [f64; 3],
    /// Mean squared branch-current norm over the constellation at unit gain.
    mean_energy: f64,
}

/// Detector state shared by the Monte Carlo and enumeration paths.
struct Detector<'a> {
    constellation: &'a CskConstellation,
    x1: Vec<[f64; 3]>,
    x2: Vec<[f64; 3]>,
    hyp_weak_at_1: Vec<[f64; 3]>,
    hyp_weak_at_2: Vec<[f64; 3]>,
    strong_at_1: Vec<[f64; 3]>,
    weak_at_1: Vec<[f64; 3]>,
    sigma_weak_1: f64,
    sigma_weak_2: f64,
    sigma_strong_1: f64,
}

fn nearest(y: &[f64; 3], hyps: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, h) in hyps.iter().enumerate() {
        let d = (y[0] - h[0]).powi(2) + (y[1] - h[1]).powi(2) + (y[2] - h[2]).powi(2);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn add_scaled(a: &[f64; 3], noise: &[f64; 3], sigma: f64) -> [f64; 3] {
    std::array::from_fn(|c| a[c] + sigma * noise[c])
}

impl Detector<'_> {
    /// Decisions `(ŝ1, ŝ2)` for one symbol pair and three unit noise draws
    /// (weak-user receiver, SIC first stage, SIC second stage).
    fn decide(&self, i1: usize, i2: usize, noise: &[[f64; 3]; 3]) -> (usize, usize) {
        let m = self.constellation.level();
        let idx = i1 * m + i2;
        let y2 = add_scaled(&self.x2[idx], &noise[0], self.sigma_weak_2);
        let d2 = nearest(&y2, &self.hyp_weak_at_2);

        let ya = add_scaled(&self.x1[idx], &noise[1], self.sigma_weak_1);
        let weak_hat = nearest(&ya, &self.hyp_weak_at_1);
        let residual: [f64; 3] = std::array::from_fn(|c| {
            self.strong_at_1[i1][c] + self.weak_at_1[i2][c] - self.weak_at_1[weak_hat][c]
        });
        let yb = add_scaled(&residual, &noise[2], self.sigma_strong_1);
        let d1 = nearest(&yb, &self.strong_at_1);
        (d1, d2)
    }

    fn errors(&self, i1: usize, i2: usize, noise: &[[f64; 3]; 3]) -> (u64, u64) {
        let (d1, d2) = self.decide(i1, i2, noise);
        (
            self.constellation.bit_errors(i1, d1) as u64,
            self.constellation.bit_errors(i2, d2) as u64,
        )
    }
}

fn normal3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}

impl LinkModel {
    pub fn new(spectral: SpectralModel, constellation: CskConstellation, config: LinkConfig) -> Result<Self> {
        config.validate()?;
        let scale = config.responsivity_a_per_w * spectral.led_power_w() / 3.0;
        let coupling = *spectral.coupling();
        let responses: Vec<[f64; 3]> = constellation
            .symbols()
            .iter()
            .map(|s| std::array::from_fn(|j| scale * (0..3).map(|i| coupling[i][j] * s[i]).sum::<f64>()))
            .collect();
        let m = responses.len() as f64;
        let mean_response = std::array::from_fn(|j| responses.iter().map(|r| r[j]).sum::<f64>() / m);
        let mean_energy = responses
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / m;
        Ok(Self {
            spectral,
            constellation,
            config,
            responses,
            mean_response,
            mean_energy,
        })
    }

    pub fn spectral(&self) -> &SpectralModel {
        &self.spectral
    }

    pub fn constellation(&self) -> &CskConstellation {
        &self.constellation
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    /// Copy of this model with a different configuration.
    pub fn with_config(&self, config: LinkConfig) -> Result<Self> {
        Self::new(self.spectral.clone(), self.constellation.clone(), config)
    }

    fn check_rho(rho: f64) -> Result<()> {
        if !(0.0..=0.5).contains(&rho) {
            return Err(Error::domain(format!("allocation {rho} outside [0, 0.5]")));
        }
        Ok(())
    }

    /// Power terms of both users with symbols replaced by their constellation mean.
    ///
    /// Each user's noise power is its own desired power divided by the linear SNR.
    /// The weak user's component at the strong receiver is removed by SIC.
    pub fn user_powers(&self, pair: &ChannelPair, rho: f64, snr_db: f64) -> Result<[UserPowers; 2]> {
        Self::check_rho(rho)?;
        let mean = self.constellation.mean_symbol();
        let snr = snr_linear(snr_db);
        let resp = self.config.responsivity_a_per_w;

        let (own1, _) = self.spectral.composite_power_components(mean, mean, rho, pair.h1())?;
        let (inter2, own2) = self.spectral.composite_power_components(mean, mean, rho, pair.h2())?;
        let (s1, cci1, _) = electrical_terms(&own1, resp);
        let (s2, cci2, _) = electrical_terms(&own2, resp);
        let (_, _, i21) = electrical_terms(&inter2, resp);
        Ok([
            UserPowers {
                signal: s1,
                cross_color: cci1,
                inter_user: 0.0,
                noise: s1 / snr,
            },
            UserPowers {
                signal: s2,
                cross_color: cci2,
                inter_user: i21,
                noise: s2 / snr,
            },
        ])
    }

    pub fn sinr_users(&self, pair: &ChannelPair, rho: f64, snr_db: f64) -> Result<[f64; 2]> {
        let p = self.user_powers(pair, rho, snr_db)?;
        Ok([p[0].sinr(), p[1].sinr()])
    }

    /// Per-branch noise standard deviation for a component of gain `gain`.
    fn branch_sigma(&self, gain: f64, snr_db: f64) -> f64 {
        let snr = snr_linear(snr_db);
        if snr.is_infinite() || gain == 0.0 {
            return 0.0;
        }
        gain * (self.mean_energy / (3.0 * snr)).sqrt()
    }

    fn detector(&self, pair: &ChannelPair, rho: f64, snr_db: f64) -> Detector<'_> {
        let (h1, h2) = (pair.h1(), pair.h2());
        let scaled = |g: f64| -> Vec<[f64; 3]> { self.responses.iter().map(|r| r.map(|v| g * v)).collect() };
        let weak_hyp = |g: f64| -> Vec<[f64; 3]> {
            self.responses
                .iter()
                .map(|r| std::array::from_fn(|c| g * ((1.0 - rho) * r[c] + rho * self.mean_response[c])))
                .collect()
        };
        let m = self.constellation.level();
        let composite = |g: f64| -> Vec<[f64; 3]> {
            let mut out = Vec::with_capacity(m * m);
            for a in &self.responses {
                for b in &self.responses {
                    out.push(std::array::from_fn(|c| g * (rho * a[c] + (1.0 - rho) * b[c])));
                }
            }
            out
        };
        Detector {
            constellation: &self.constellation,
            x1: composite(h1),
            x2: composite(h2),
            hyp_weak_at_1: weak_hyp(h1),
            hyp_weak_at_2: weak_hyp(h2),
            strong_at_1: scaled(h1 * rho),
            weak_at_1: scaled(h1 * (1.0 - rho)),
            sigma_weak_1: self.branch_sigma(h1 * (1.0 - rho), snr_db),
            sigma_weak_2: self.branch_sigma(h2 * (1.0 - rho), snr_db),
            sigma_strong_1: self.branch_sigma(h1 * rho, snr_db),
        }
    }

    /// Monte Carlo bit error rates `(BER1, BER2)`.
    ///
    /// Trials are split into fixed chunks, each drawing from its own substream of
    /// `key`, so the result does not depend on the number of worker threads.
    pub fn simulate_ber(&self, pair: &ChannelPair, rho: f64, snr_db: f64, n_symbols: usize, key: u64) -> Result<[f64; 2]> {
        Self::check_rho(rho)?;
        if n_symbols < MIN_MC_SYMBOLS {
            return Err(Error::Precondition(format!(
                "Monte Carlo needs at least {MIN_MC_SYMBOLS} symbols, got {n_symbols}"
            )));
        }
        let det = self.detector(pair, rho, snr_db);
        let m = self.constellation.level();
        let chunks = n_symbols.div_ceil(CHUNK);
        let (e1, e2) = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_from_key(stream_key(key, &[tag::MC_CHUNK, c as u64]));
                let trials = CHUNK.min(n_symbols - c * CHUNK);
                let mut acc = (0u64, 0u64);
                for _ in 0..trials {
                    let i1 = rng.random_range(0..m);
                    let i2 = rng.random_range(0..m);
                    let noise = [normal3(&mut rng), normal3(&mut rng), normal3(&mut rng)];
                    let (a, b) = det.errors(i1, i2, &noise);
                    acc.0 += a;
                    acc.1 += b;
                }
                acc
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let bits = (n_symbols as u64 * self.constellation.bits_per_symbol() as u64) as f64;
        Ok([e1 as f64 / bits, e2 as f64 / bits])
    }

    /// Noise-free decisions for every symbol pair, averaged with equal weight.
    pub fn enumerate_ber_noiseless(&self, pair: &ChannelPair, rho: f64) -> Result<[f64; 2]> {
        Self::check_rho(rho)?;
        let det = self.detector(pair, rho, f64::INFINITY);
        let m = self.constellation.level();
        let zero = [[0.0; 3]; 3];
        let (mut e1, mut e2) = (0u64, 0u64);
        for i1 in 0..m {
            for i2 in 0..m {
                let (a, b) = det.errors(i1, i2, &zero);
                e1 += a;
                e2 += b;
            }
        }
        let bits = ((m * m) as u64 * self.constellation.bits_per_symbol() as u64) as f64;
        Ok([e1 as f64 / bits, e2 as f64 / bits])
    }

    /// Noise-free decisions `(ŝ1, ŝ2)` for one symbol pair.
    pub fn decide_noiseless(&self, pair: &ChannelPair, rho: f64, i1: usize, i2: usize) -> Result<(usize, usize)> {
        Self::check_rho(rho)?;
        let m = self.constellation.level();
        if i1 >= m || i2 >= m {
            return Err(Error::domain("symbol index out of range"));
        }
        Ok(self.detector(pair, rho, f64::INFINITY).decide(i1, i2, &[[0.0; 3]; 3]))
    }

    /// Full link evaluation for one allocation.
    pub fn evaluate(&self, pair: &ChannelPair, rho: f64, snr_db: f64, n_symbols: usize, key: u64) -> Result<LinkReport> {
        let sinr = self.sinr_users(pair, rho, snr_db)?;
        let ber = self.simulate_ber(pair, rho, snr_db, n_symbols, key)?;
        LinkReport::from_parts(sinr, ber, self.config.bandwidth_hz)
    }

    /// `evaluate` with the configured SNR and the evaluation Monte Carlo budget.
    pub fn evaluate_link(&self, pair: &ChannelPair, rho: f64, key: u64) -> Result<LinkReport> {
        self.evaluate(pair, rho, self.config.snr_db, self.config.mc_symbols, key)
    }

    /// SINR of a user served alone at full power.
    pub fn solo_sinr(&self, gain: f64, snr_db: f64) -> Result<f64> {
        let mean = self.constellation.mean_symbol();
        let p = self.spectral.power_matrix(mean, gain)?;
        let (s, cci, _) = electrical_terms(&p, self.config.responsivity_a_per_w);
        Ok(UserPowers {
            signal: s,
            cross_color: cci,
            inter_user: 0.0,
            noise: s / snr_linear(snr_db),
        }
        .sinr())
    }

    /// Monte Carlo BER of a user served alone, ML over the plain constellation.
    pub fn solo_ber(&self, gain: f64, snr_db: f64, n_symbols: usize, key: u64) -> Result<f64> {
        if n_symbols < MIN_MC_SYMBOLS {
            return Err(Error::Precondition(format!(
                "Monte Carlo needs at least {MIN_MC_SYMBOLS} symbols, got {n_symbols}"
            )));
        }
        if !(gain > 0.0) {
            return Err(Error::domain("channel gain must be positive"));
        }
        let hyps: Vec<[f64; 3]> = self.responses.iter().map(|r| r.map(|v| gain * v)).collect();
        let sigma = self.branch_sigma(gain, snr_db);
        let m = self.constellation.level();
        let chunks = n_symbols.div_ceil(CHUNK);
        let errors: u64 = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_from_key(stream_key(key, &[tag::MC_CHUNK, c as u64]));
                let trials = CHUNK.min(n_symbols - c * CHUNK);
                let mut acc = 0u64;
                for _ in 0..trials {
                    let i = rng.random_range(0..m);
                    let y = add_scaled(&hyps[i], &normal3(&mut rng), sigma);
                    acc += self.constellation.bit_errors(i, nearest(&y, &hyps)) as u64;
                }
                acc
            })
            .sum();
        Ok(errors as f64 / (n_symbols as u64 * self.constellation.bits_per_symbol() as u64) as f64)
    }

    /// Two-slot TDMA: each user is served alone at full power for half the time.
    pub fn tdma(&self, pair: &ChannelPair, snr_db: f64, n_symbols: usize, key: u64) -> Result<LinkReport> {
        let mut sinr = [0.0; 2];
        let mut ber = [0.0; 2];
        for user in 0..2 {
            let gain = pair.gain(user);
            sinr[user] = self.solo_sinr(gain, snr_db)?;
            ber[user] = self.solo_ber(gain, snr_db, n_symbols, stream_key(key, &[user as u64]))?;
        }
        let cap = sinr.map(|s| 0.5 * capacity(s, self.config.bandwidth_hz));
        LinkReport::from_rates(sinr, cap, ber)
    }
}

impl Default for LinkModel {
    fn default() -> Self {
        Self::new(SpectralModel::default(), CskConstellation::default(), LinkConfig::default())
            .expect("default link model is valid")
    }
}

impl LinkReport {
    pub fn from_parts(sinr: [f64; 2], ber: [f64; 2], bandwidth_hz: f64) -> Result<Self> {
        Self::from_rates(sinr, sinr.map(|s| capacity(s, bandwidth_hz)), ber)
    }

    fn from_rates(sinr: [f64; 2], capacity_bps: [f64; 2], ber: [f64; 2]) -> Result<Self> {
        let throughput_bps = [
            throughput(capacity_bps[0], ber[0]),
            throughput(capacity_bps[1], ber[1]),
        ];
        Ok(Self {
            sinr,
            capacity_bps,
            ber,
            throughput_bps,
            jain: jain_index(&throughput_bps)?,
            sum_rate_bps: throughput_bps[0] + throughput_bps[1],
        })
    }
}
