//! Experiment drivers: training, r sweeps, SNR sweeps, the generalisation
//! study and the illumination table, all written as CSV.
//!
//! Trial `s` of a run with global seed `g` uses the trial seed `g + s`
//! (wrapping). Channel draws come from the stream `(trial seed, SWEEP_CHANNEL,
//! bits of r)` and Monte Carlo noise from `(trial seed, tag, bits of r, bits of
//! SNR, policy code)`, so every row is a pure function of its coordinates and
//! the schedule of the worker pool cannot change it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::channel::{ChannelBounds, ChannelPair};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::illumination::{illumination_compare, IlluminationRow};
use crate::link::{LinkModel, LinkReport};
use crate::policy::{apply_policy, evaluate_decision, AllocationDecision, PolicyKind};
use crate::rng::{stream_key, substream, tag};
use crate::sac::checkpoint::save_trainer;
use crate::sac::{training_calls, EpisodeRecord, SacAgent, StopReason, Trainer};

/// Value written in the `rho` column for the time-split baseline: each
/// user owns half of the time.
pub const TDMA_SHARE: f64 = 0.5;

fn policy_code(p: PolicyKind) -> u64 {
    PolicyKind::ALL.iter().position(|q| *q == p).expect("listed policy") as u64
}

/// One evaluated (point, policy, trial) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub snr_db: f64,
    pub policy: PolicyKind,
    pub rho: f64,
    pub t1: f64,
    pub t2: f64,
    pub sum_rate: f64,
    pub j: f64,
    pub ber1: f64,
    pub ber2: f64,
    pub seed: u64,
}

impl SweepRow {
    fn new(r: f64, snr_db: f64, policy: PolicyKind, rho: f64, rep: &LinkReport, seed: u64) -> Self {
        Self {
            r,
            snr_db,
            policy,
            rho,
            t1: rep.throughput_bps[0],
            t2: rep.throughput_bps[1],
            sum_rate: rep.sum_rate_bps,
            j: rep.jain,
            ber1: rep.ber[0],
            ber2: rep.ber[1],
            seed,
        }
    }

    fn metrics(&self) -> [f64; 8] {
        [self.rho, self.t1, self.t2, self.sum_rate, self.j, self.ber1, self.ber2, self.snr_db]
    }
}

/// Mean over the trials of one (point, policy) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRow {
    pub r: f64,
    pub snr_db: f64,
    pub policy: PolicyKind,
    pub rho: f64,
    pub t1: f64,
    pub t2: f64,
    pub sum_rate: f64,
    pub j: f64,
    pub ber1: f64,
    pub ber2: f64,
    /// Standard error of the mean BER across trials, per user.
    pub ber_se: [f64; 2],
    pub trials: usize,
}

/// Averages rows that arrive grouped by (point, policy).
pub fn aggregate(rows: &[SweepRow]) -> Vec<MeanRow> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].r, rows[start].snr_db, rows[start].policy);
        let end = rows[start..]
            .iter()
            .position(|x| (x.r, x.snr_db, x.policy) != key)
            .map_or(rows.len(), |k| start + k);
        let cell = &rows[start..end];
        let n = cell.len() as f64;
        let mut mean = [0.0; 8];
        for row in cell {
            for (m, v) in mean.iter_mut().zip(row.metrics()) {
                *m += v / n;
            }
        }
        let se = |f: fn(&SweepRow) -> f64, mu: f64| {
            if cell.len() < 2 {
                return 0.0;
            }
            let var = cell.iter().map(|x| (f(x) - mu).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        out.push(MeanRow {
            r: key.0,
            snr_db: key.1,
            policy: key.2,
            rho: mean[0],
            t1: mean[1],
            t2: mean[2],
            sum_rate: mean[3],
            j: mean[4],
            ber1: mean[5],
            ber2: mean[6],
            ber_se: [se(|x| x.ber1, mean[5]), se(|x| x.ber2, mean[6])],
            trials: cell.len(),
        });
        start = end;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub means: Vec<MeanRow>,
}

fn require_agent(policies: &[PolicyKind], agent: Option<&SacAgent>) -> Result<()> {
    if policies.contains(&PolicyKind::Sac) && agent.is_none() {
        return Err(Error::config("policy 'sac' needs a trained agent checkpoint (--agent)"));
    }
    Ok(())
}

/// Evaluates one policy on one channel pair.
pub fn evaluate_policy(
    link: &LinkModel,
    agent: Option<&SacAgent>,
    policy: PolicyKind,
    pair: &ChannelPair,
    snr_db: f64,
    key: u64,
) -> Result<(f64, LinkReport)> {
    let decision = apply_policy(policy, pair, agent)?;
    let rho = match decision {
        AllocationDecision::Noma { rho1 } => rho1,
        AllocationDecision::TimeSplit => TDMA_SHARE,
    };
    let report = evaluate_decision(link, pair, decision, snr_db, link.config().mc_symbols, key)?;
    Ok((rho, report))
}

/// Where a sweep point gets its channel pair from.
#[derive(Debug, Clone, Copy)]
enum PairSource {
    Sampled(ChannelBounds),
    Fixed { h1: f64 },
}

fn sweep(
    link: &LinkModel,
    agent: Option<&SacAgent>,
    points: &[(f64, f64)],
    source: PairSource,
    policies: &[PolicyKind],
    trials: usize,
    seed: u64,
) -> Result<SweepOutput> {
    require_agent(policies, agent)?;
    let mut jobs = Vec::with_capacity(points.len() * policies.len() * trials);
    for &(r, snr_db) in points {
        for &policy in policies {
            for s in 0..trials {
                jobs.push((r, snr_db, policy, seed.wrapping_add(s as u64)));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(r, snr_db, policy, trial_seed)| {
            let (pair, ber_tag) = match source {
                PairSource::Sampled(bounds) => {
                    let mut rng = substream(trial_seed, &[tag::SWEEP_CHANNEL, r.to_bits()]);
                    (bounds.sample_pair(r, &mut rng)?, tag::SWEEP_BER)
                }
                PairSource::Fixed { h1 } => (ChannelPair::from_ratio(h1, r)?, tag::SNR_BER),
            };
            let key = stream_key(trial_seed, &[ber_tag, r.to_bits(), snr_db.to_bits(), policy_code(policy)]);
            let (rho, rep) = evaluate_policy(link, agent, policy, &pair, snr_db, key)?;
            Ok(SweepRow::new(r, snr_db, policy, rho, &rep, trial_seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let means = aggregate(&rows);
    Ok(SweepOutput { rows, means })
}

/// Sweep over the configured r grid with channels drawn from `bounds`.
pub fn sweep_r(cfg: &SimConfig, link: &LinkModel, agent: Option<&SacAgent>, bounds: ChannelBounds) -> Result<SweepOutput> {
    let x = &cfg.experiment;
    let points: Vec<(f64, f64)> = x.r_grid().into_iter().map(|r| (r, cfg.link.snr_db)).collect();
    sweep(link, agent, &points, PairSource::Sampled(bounds), &x.policies, x.seeds, x.seed)
}

/// BER against SNR at a fixed stronger-user gain for the configured ratios.
pub fn sweep_snr(cfg: &SimConfig, link: &LinkModel, agent: Option<&SacAgent>) -> Result<SweepOutput> {
    let x = &cfg.experiment;
    let snrs = x.snr_grid();
    let points: Vec<(f64, f64)> = x
        .snr_ratios
        .iter()
        .flat_map(|&r| snrs.iter().map(move |&s| (r, s)))
        .collect();
    let policies: Vec<PolicyKind> = x.policies.iter().copied().filter(|p| *p != PolicyKind::Tdma).collect();
    if policies.is_empty() {
        return Err(Error::config("the SNR sweep needs at least one NOMA policy"));
    }
    sweep(link, agent, &points, PairSource::Fixed { h1: x.snr_h1 }, &policies, x.snr_seeds, x.seed)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("CSV encoding failed: {other:?}")),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    debug_assert!(v.is_finite(), "non-finite CSV value");
    format!("{v}")
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Internal("non-finite value in CSV row".into()))
    }
}

/// Companion path for the per-point means: `out.csv` becomes `out_mean.csv`.
pub fn mean_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_mean.{ext}"),
        None => format!("{stem}_mean"),
    };
    out.with_file_name(name)
}

/// Writes the per-trial and the averaged CSV. With `snr` the rows lead with
/// an `snr_db` column.
pub fn write_sweep(out: &Path, result: &SweepOutput, snr: bool) -> Result<()> {
    for row in &result.rows {
        check_finite(&row.metrics())?;
    }
    let lead: &[&str] = if snr { &["snr_db", "r"] } else { &["r"] };
    let tail = ["policy", "rho", "t1", "t2", "sum_rate", "j", "ber1", "ber2"];
    let lead_values = |r: f64, s: f64| if snr { vec![num(s), num(r)] } else { vec![num(r)] };

    let header: Vec<&str> = lead.iter().chain(&tail).chain(&["seed"]).copied().collect();
    let rows = result.rows.iter().map(|x| {
        let mut v = lead_values(x.r, x.snr_db);
        v.push(x.policy.to_string());
        v.extend([x.rho, x.t1, x.t2, x.sum_rate, x.j, x.ber1, x.ber2].map(num));
        v.push(x.seed.to_string());
        v
    });
    write_csv(out, &header, rows)?;

    let header: Vec<&str> = lead
        .iter()
        .chain(&tail)
        .chain(&["ber1_se", "ber2_se", "trials"])
        .copied()
        .collect();
    let rows = result.means.iter().map(|x| {
        let mut v = lead_values(x.r, x.snr_db);
        v.push(x.policy.to_string());
        v.extend([x.rho, x.t1, x.t2, x.sum_rate, x.j, x.ber1, x.ber2, x.ber_se[0], x.ber_se[1]].map(num));
        v.push(x.trials.to_string());
        v
    });
    write_csv(&mean_path(out), &header, rows)
}

/// Runs training from the configured seed, reporting each finished episode.
pub fn train_agent(
    cfg: &SimConfig,
    link: Arc<LinkModel>,
    mut progress: impl FnMut(&EpisodeRecord),
) -> Result<(Trainer, StopReason)> {
    let env = cfg.env(link)?;
    let mut trainer = Trainer::new(env, cfg.agent.clone(), cfg.experiment.seed)?;
    loop {
        if let Some(reason) = trainer.stop_reason() {
            return Ok((trainer, reason));
        }
        if let Some(record) = trainer.step()? {
            progress(&record);
        }
    }
}

pub fn write_training_csv(path: &Path, history: &[EpisodeRecord]) -> Result<()> {
    let header = ["episode", "return", "steps", "terminal_j", "rolling_avg_return"];
    for r in history {
        check_finite(&[r.episode_return, r.terminal_jain, r.rolling_avg_return])?;
    }
    let rows = history.iter().map(|r| {
        vec![
            r.episode.to_string(),
            num(r.episode_return),
            r.steps.to_string(),
            num(r.terminal_jain),
            num(r.rolling_avg_return),
        ]
    });
    write_csv(path, &header, rows)
}

/// Trains, then writes the per-episode CSV and a resumable checkpoint.
pub fn run_train(
    cfg: &SimConfig,
    out: &Path,
    checkpoint: &Path,
    progress: impl FnMut(&EpisodeRecord),
) -> Result<(Trainer, StopReason)> {
    let link = Arc::new(cfg.link_model()?);
    let (trainer, reason) = train_agent(cfg, link, progress)?;
    write_training_csv(out, &trainer.history)?;
    save_trainer(&trainer, checkpoint)?;
    Ok((trainer, reason))
}

pub fn run_sweep_r(cfg: &SimConfig, agent: Option<&SacAgent>, out: &Path) -> Result<SweepOutput> {
    let link = cfg.link_model()?;
    let result = sweep_r(cfg, &link, agent, cfg.bounds)?;
    write_sweep(out, &result, false)?;
    Ok(result)
}

pub fn run_snr_ber(cfg: &SimConfig, agent: Option<&SacAgent>, out: &Path) -> Result<SweepOutput> {
    let link = cfg.link_model()?;
    let result = sweep_snr(cfg, &link, agent)?;
    write_sweep(out, &result, true)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationOutput {
    pub sweep: SweepOutput,
    pub bounds: ChannelBounds,
    /// Training steps and gradient updates seen while the sweep ran.
    pub training_calls: u64,
}

/// The r sweep repeated on the widened channel bounds with a frozen agent.
pub fn run_generalization(cfg: &SimConfig, agent: Option<&SacAgent>, out: &Path) -> Result<GeneralizationOutput> {
    let link = cfg.link_model()?;
    let bounds = cfg.extended_bounds();
    let before = training_calls();
    let sweep = sweep_r(cfg, &link, agent, bounds)?;
    let training_calls = training_calls() - before;
    write_sweep(out, &sweep, false)?;
    Ok(GeneralizationOutput {
        sweep,
        bounds,
        training_calls,
    })
}

/// Allocation for the NOMA row: the agent's choice at `r = 0.5` when one is
/// given, otherwise `illum.rho`.
pub fn illumination_rho(cfg: &SimConfig, agent: Option<&SacAgent>) -> f64 {
    agent.map_or(cfg.experiment.illum_rho, |a| a.act_deterministic(0.5))
}

pub fn run_illumination(cfg: &SimConfig, agent: Option<&SacAgent>, out: &Path) -> Result<[IlluminationRow; 3]> {
    let link = cfg.link_model()?;
    let rho = illumination_rho(cfg, agent);
    let rows = illumination_compare(link.spectral(), link.constellation(), rho)?;
    for r in &rows {
        check_finite(&[r.report.cri_ra, r.report.cct_k, r.report.luminous_flux_lm, r.flux_ratio])?;
    }
    let header = ["row", "rho", "cri", "cct_k", "flux_lm", "flux_ratio"];
    let lines = rows.iter().map(|r| {
        vec![
            r.mode.label().to_string(),
            num(r.mode.rho()),
            num(r.report.cri_ra),
            num(r.report.cct_k),
            num(r.report.luminous_flux_lm),
            num(r.flux_ratio),
        ]
    });
    write_csv(out, &header, lines)?;
    Ok(rows)
}
