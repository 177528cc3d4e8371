//! Experiment configuration read from a flat dotted-key TOML file.
//!
//! Keys may be written flat (`link.snr_db = 12`) or grouped under tables
//! (`[link]` then `snr_db = 12`); both flatten to the same dotted name. Any
//! key not listed in [`KEYS`] is rejected.

use std::path::Path;
use std::sync::Arc;

use crate::channel::{extended_bounds, ChannelBounds, GeometryConfig, MID_GAIN};
use crate::error::{Error, Result};
use crate::link::{default_constellation, LinkConfig, LinkModel};
use crate::policy::{parse_policy_list, PolicyKind};
use crate::sac::{AgentConfig, EnvConfig, NomaEnv, RewardConfig};
use crate::spectral::{FilterBank, LedColorParams, SpectralModel, DEFAULT_STEP_NM};

/// Sweep and sampling settings shared by the experiment commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policies: Vec<PolicyKind>,
    pub r_start: f64,
    pub r_stop: f64,
    pub r_step: f64,
    /// Independent seeds per sweep point.
    pub seeds: usize,
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
    pub snr_ratios: Vec<f64>,
    pub snr_h1: f64,
    pub snr_seeds: usize,
    /// Widening factor of the channel bounds in the generalisation study.
    pub bounds_scale: f64,
    /// Allocation used for the NOMA row of the illumination table.
    pub illum_rho: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policies: PolicyKind::ALL.to_vec(),
            r_start: 0.01,
            r_stop: 0.99,
            r_step: 0.01,
            seeds: 20,
            snr_start_db: 0.0,
            snr_stop_db: 30.0,
            snr_step_db: 2.0,
            snr_ratios: vec![0.1, 0.5, 0.9],
            snr_h1: MID_GAIN,
            snr_seeds: 5,
            bounds_scale: 5.0,
            illum_rho: 0.0333,
        }
    }
}

impl ExperimentConfig {
    /// Publication-scale sweep resolution.
    pub fn paper_scale(mut self) -> Self {
        self.r_start = 0.001;
        self.r_stop = 0.999;
        self.r_step = 0.001;
        self.seeds = 500;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_step > 0.0 && self.r_start > 0.0 && self.r_stop <= 1.0 && self.r_start <= self.r_stop) {
            return Err(Error::config("r grid needs 0 < start <= stop <= 1 and step > 0"));
        }
        if !(self.snr_step_db > 0.0 && self.snr_start_db <= self.snr_stop_db) {
            return Err(Error::config("SNR grid needs start <= stop and step > 0"));
        }
        if self.seeds == 0 || self.snr_seeds == 0 {
            return Err(Error::config("seed counts must be positive"));
        }
        if self.snr_ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::config("SNR-sweep ratios must lie in (0, 1]"));
        }
        if !(self.snr_h1 > 0.0 && self.bounds_scale >= 1.0) {
            return Err(Error::config("snr.h1 must be positive and channel.bounds_scale at least 1"));
        }
        if !(0.0..=0.5).contains(&self.illum_rho) {
            return Err(Error::config("illum.rho must lie in [0, 0.5]"));
        }
        Ok(())
    }

    /// Channel ratios of the sweep, computed from integer offsets.
    pub fn r_grid(&self) -> Vec<f64> {
        grid(self.r_start, self.r_stop, self.r_step)
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        grid(self.snr_start_db, self.snr_stop_db, self.snr_step_db)
    }
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Full simulator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub leds: [LedColorParams; 3],
    pub led_power_w: f64,
    pub spectral_step_nm: f64,
    pub filters: FilterBank,
    pub geometry: GeometryConfig,
    pub bounds: ChannelBounds,
    pub link: LinkConfig,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub agent: AgentConfig,
    pub experiment: ExperimentConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let bounds = ChannelBounds::default();
        Self {
            leds: LedColorParams::defaults(),
            led_power_w: 1.0,
            spectral_step_nm: DEFAULT_STEP_NM,
            filters: FilterBank::default(),
            geometry: GeometryConfig::default(),
            bounds,
            link: LinkConfig::default(),
            env: EnvConfig {
                bounds,
                ..EnvConfig::default()
            },
            reward: RewardConfig::default(),
            agent: AgentConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "seed",
    "led.power_w",
    "led.{red,green,blue}.{peak_nm,left_half_width_nm,right_half_width_nm,shape_k1,shape_k2}",
    "spectral.step_nm",
    "filter.gain",
    "filter.{red,green,blue}.{lo_nm,hi_nm}",
    "geometry.{pd_area_m2,led_half_angle_deg,filter_gain,lens_gain,lens_refractive_index,pd_fov_deg}",
    "geometry.{tx_position,rx_position}",
    "channel.{h_min,h_max,bounds_scale}",
    "link.{bandwidth_hz,snr_db,mc_symbols,mc_symbols_train,responsivity_a_per_w}",
    "env.{max_steps,success_bonus,failure_penalty,fairness_target}",
    "reward.{fairness_bonus,fairness_penalty,sum_rate_weight,ber_threshold,ber_penalty}",
    "reward.{power_scale,power_center,stability_bonus,stability_penalty,stability_band}",
    "agent.{gamma,alpha,tau,learning_rate,buffer_capacity,batch_size,max_episodes}",
    "agent.{score_window,stop_value,hidden,warmup_steps,updates_per_step}",
    "agent.{adam_beta1,adam_beta2,adam_eps}",
    "sweep.{policies,r_start,r_stop,r_step,seeds}",
    "snr.{start_db,stop_db,step_db,ratios,h1,seeds}",
    "illum.rho",
];

const COLORS: [&str; 3] = ["red", "green", "blue"];

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(format!("invalid TOML: {}", e.message())))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = Self::default();
        for (key, value) in &flat {
            cfg.set(key, value)?;
        }
        cfg.env.bounds = cfg.bounds;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| Error::config(e.to_string()));
        for led in &self.leds {
            wrap(led.validate())?;
        }
        wrap(self.filters.validate())?;
        wrap(self.geometry.validate())?;
        wrap(self.bounds.validate())?;
        wrap(self.link.validate())?;
        wrap(self.env.validate())?;
        wrap(self.reward.validate())?;
        wrap(self.agent.validate())?;
        if !(self.led_power_w > 0.0 && self.spectral_step_nm > 0.0) {
            return Err(Error::config("led.power_w and spectral.step_nm must be positive"));
        }
        self.experiment.validate()
    }

    fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        let x = &mut self.experiment;
        match parts.as_slice() {
            ["seed"] => x.seed = uint(key, v)?,
            ["led", "power_w"] => self.led_power_w = num(key, v)?,
            ["led", color, field] => {
                let led = &mut self.leds[color_index(key, color)?];
                let slot = match *field {
                    "peak_nm" => &mut led.peak_nm,
                    "left_half_width_nm" => &mut led.left_half_width_nm,
                    "right_half_width_nm" => &mut led.right_half_width_nm,
                    "shape_k1" => &mut led.shape_k1,
                    "shape_k2" => &mut led.shape_k2,
                    _ => return Err(unknown(key)),
                };
                *slot = num(key, v)?;
            }
            ["spectral", "step_nm"] => self.spectral_step_nm = num(key, v)?,
            ["filter", "gain"] => self.filters.gain = num(key, v)?,
            ["filter", color, "lo_nm"] => self.filters.bands_nm[color_index(key, color)?].0 = num(key, v)?,
            ["filter", color, "hi_nm"] => self.filters.bands_nm[color_index(key, color)?].1 = num(key, v)?,
            ["geometry", field] => {
                let g = &mut self.geometry;
                match *field {
                    "tx_position" => g.tx_position = triple(key, v)?,
                    "rx_position" => g.rx_position = triple(key, v)?,
                    _ => {
                        let slot = match *field {
                            "pd_area_m2" => &mut g.pd_area_m2,
                            "led_half_angle_deg" => &mut g.led_half_angle_deg,
                            "filter_gain" => &mut g.filter_gain,
                            "lens_gain" => &mut g.lens_gain,
                            "lens_refractive_index" => &mut g.lens_refractive_index,
                            "pd_fov_deg" => &mut g.pd_fov_deg,
                            _ => return Err(unknown(key)),
                        };
                        *slot = num(key, v)?;
                    }
                }
            }
            ["channel", "h_min"] => self.bounds.h_min = num(key, v)?,
            ["channel", "h_max"] => self.bounds.h_max = num(key, v)?,
            ["channel", "bounds_scale"] => x.bounds_scale = num(key, v)?,
            ["link", field] => {
                let l = &mut self.link;
                match *field {
                    "bandwidth_hz" => l.bandwidth_hz = num(key, v)?,
                    "snr_db" => l.snr_db = num(key, v)?,
                    "mc_symbols" => l.mc_symbols = uint(key, v)?,
                    "mc_symbols_train" => l.mc_symbols_train = uint(key, v)?,
                    "responsivity_a_per_w" => l.responsivity_a_per_w = num(key, v)?,
                    _ => return Err(unknown(key)),
                }
            }
            ["env", field] => match *field {
                "max_steps" => self.env.max_steps = uint(key, v)?,
                "success_bonus" => self.env.success_bonus = num(key, v)?,
                "failure_penalty" => self.env.failure_penalty = num(key, v)?,
                "fairness_target" => self.reward.fairness_target = num(key, v)?,
                _ => return Err(unknown(key)),
            },
            ["reward", "stability_band"] => {
                let b = list(key, v)?;
                if b.len() != 2 {
                    return Err(Error::config(format!("{key} needs two numbers")));
                }
                self.reward.stability_band = (b[0], b[1]);
            }
            ["reward", field] => {
                let r = &mut self.reward;
                let slot = match *field {
                    "fairness_bonus" => &mut r.fairness_bonus,
                    "fairness_penalty" => &mut r.fairness_penalty,
                    "sum_rate_weight" => &mut r.sum_rate_weight,
                    "ber_threshold" => &mut r.ber_threshold,
                    "ber_penalty" => &mut r.ber_penalty,
                    "power_scale" => &mut r.power_scale,
                    "power_center" => &mut r.power_center,
                    "stability_bonus" => &mut r.stability_bonus,
                    "stability_penalty" => &mut r.stability_penalty,
                    _ => return Err(unknown(key)),
                };
                *slot = num(key, v)?;
            }
            ["agent", field] => {
                let a = &mut self.agent;
                match *field {
                    "gamma" => a.gamma = num(key, v)?,
                    "alpha" => a.alpha = num(key, v)?,
                    "tau" => a.tau = num(key, v)?,
                    "learning_rate" => a.learning_rate = num(key, v)?,
                    "buffer_capacity" => a.buffer_capacity = uint(key, v)?,
                    "batch_size" => a.batch_size = uint(key, v)?,
                    "max_episodes" => a.max_episodes = uint(key, v)?,
                    "score_window" => a.score_window = uint(key, v)?,
                    "stop_value" => a.stop_value = num(key, v)?,
                    "hidden" => {
                        a.hidden = list(key, v)?
                            .into_iter()
                            .map(|h| {
                                if h >= 1.0 && h.fract() == 0.0 {
                                    Ok(h as usize)
                                } else {
                                    Err(Error::config(format!("{key} needs positive integers")))
                                }
                            })
                            .collect::<Result<_>>()?
                    }
                    "warmup_steps" => a.warmup_steps = uint(key, v)?,
                    "updates_per_step" => a.updates_per_step = uint(key, v)?,
                    "adam_beta1" => a.adam_beta1 = num(key, v)?,
                    "adam_beta2" => a.adam_beta2 = num(key, v)?,
                    "adam_eps" => a.adam_eps = num(key, v)?,
                    _ => return Err(unknown(key)),
                }
            }
            ["sweep", field] => match *field {
                "policies" => x.policies = policies(key, v)?,
                "r_start" => x.r_start = num(key, v)?,
                "r_stop" => x.r_stop = num(key, v)?,
                "r_step" => x.r_step = num(key, v)?,
                "seeds" => x.seeds = uint(key, v)?,
                _ => return Err(unknown(key)),
            },
            ["snr", field] => match *field {
                "start_db" => x.snr_start_db = num(key, v)?,
                "stop_db" => x.snr_stop_db = num(key, v)?,
                "step_db" => x.snr_step_db = num(key, v)?,
                "ratios" => x.snr_ratios = list(key, v)?,
                "h1" => x.snr_h1 = num(key, v)?,
                "seeds" => x.snr_seeds = uint(key, v)?,
                _ => return Err(unknown(key)),
            },
            ["illum", "rho"] => x.illum_rho = num(key, v)?,
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    pub fn spectral_model(&self) -> Result<SpectralModel> {
        SpectralModel::new(self.leds, self.filters, self.led_power_w, self.spectral_step_nm)
    }

    pub fn link_model(&self) -> Result<LinkModel> {
        LinkModel::new(self.spectral_model()?, default_constellation(), self.link)
    }

    pub fn env(&self, link: Arc<LinkModel>) -> Result<NomaEnv> {
        NomaEnv::new(link, self.env, self.reward)
    }

    /// Bounds of the generalisation study.
    pub fn extended_bounds(&self) -> ChannelBounds {
        let s = self.experiment.bounds_scale;
        if self.bounds == ChannelBounds::default() {
            let (h_min, h_max) = extended_bounds(s);
            ChannelBounds { h_min, h_max }
        } else {
            ChannelBounds {
                h_min: self.bounds.h_min / s,
                h_max: self.bounds.h_max * s,
            }
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn unknown(key: &str) -> Error {
    Error::config(format!("unknown key '{key}'"))
}

fn color_index(key: &str, color: &str) -> Result<usize> {
    COLORS.iter().position(|c| *c == color).ok_or_else(|| unknown(key))
}

fn num(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) if f.is_finite() => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(format!("{key} must be a finite number"))),
    }
}

fn uint<T: TryFrom<i64>>(key: &str, v: &toml::Value) -> Result<T> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => {
            T::try_from(*i).map_err(|_| Error::config(format!("{key} is out of range")))
        }
        _ => Err(Error::config(format!("{key} must be a non-negative integer"))),
    }
}

fn list(key: &str, v: &toml::Value) -> Result<Vec<f64>> {
    match v {
        toml::Value::Array(items) => items.iter().map(|i| num(key, i)).collect(),
        _ => Err(Error::config(format!("{key} must be an array of numbers"))),
    }
}

fn triple(key: &str, v: &toml::Value) -> Result<[f64; 3]> {
    let l = list(key, v)?;
    l.try_into().map_err(|_| Error::config(format!("{key} needs three numbers")))
}

fn policies(key: &str, v: &toml::Value) -> Result<Vec<PolicyKind>> {
    match v {
        toml::Value::String(s) => parse_policy_list(s),
        toml::Value::Array(items) => {
            let names = items
                .iter()
                .map(|i| i.as_str().ok_or_else(|| Error::config(format!("{key} must list policy names"))))
                .collect::<Result<Vec<_>>>()?;
            parse_policy_list(&names.join(","))
        }
        _ => Err(Error::config(format!("{key} must list policy names"))),
    }
}
