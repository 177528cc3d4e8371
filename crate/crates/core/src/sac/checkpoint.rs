//! Binary agent checkpoints.
//!
//! Layout: the magic bytes `NCSKSAC\0`, a little-endian `u32` format version,
//! a `u32` header length and a UTF-8 `key=value` header describing the
//! architecture and configuration. Then come the parameter arrays (actor,
//! critic 1, critic 2, target 1, target 2), each a `u64` length followed by
//! little-endian `f64` values. When the header says `training_state=1` the
//! optimiser moments, trainer counters, replay buffer and episode history
//! follow, which is enough to resume training bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::agent::{AgentConfig, SacAgent};
use super::buffer::{ReplayBuffer, Transition};
use super::env::NomaEnv;
use super::nn::{Adam, Mlp};
use super::train::{EpisodeRecord, Trainer};
use crate::channel::ChannelPair;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NCSKSAC\0";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn array(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn adam(&mut self, a: &Adam) {
        self.array(&a.m);
        self.array(&a.v);
        self.u64(a.t);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn array(&mut self, expected: usize) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::Format(format!("array of {n} values where {expected} were expected")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn adam(&mut self, n: usize, template: &Adam) -> Result<Adam> {
        let m = self.array(n)?;
        let v = self.array(n)?;
        let t = self.u64()?;
        Ok(Adam { m, v, t, ..template.clone() })
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(())
    }
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

fn header_text(agent: &SacAgent, training: bool) -> String {
    let c = &agent.config;
    let mut lines = vec![
        format!("actor_sizes={}", join_sizes(agent.actor_net.sizes())),
        format!("critic_sizes={}", join_sizes(agent.critic_net.sizes())),
        format!("gamma={}", c.gamma),
        format!("alpha={}", c.alpha),
        format!("tau={}", c.tau),
        format!("learning_rate={}", c.learning_rate),
        format!("buffer_capacity={}", c.buffer_capacity),
        format!("batch_size={}", c.batch_size),
        format!("max_episodes={}", c.max_episodes),
        format!("score_window={}", c.score_window),
        format!("stop_value={}", c.stop_value),
        format!("warmup_steps={}", c.warmup_steps),
        format!("updates_per_step={}", c.updates_per_step),
        format!("adam_beta1={}", c.adam_beta1),
        format!("adam_beta2={}", c.adam_beta2),
        format!("adam_eps={}", c.adam_eps),
        format!("update_count={}", agent.update_count),
        format!("training_state={}", u8::from(training)),
    ];
    lines.push(String::new());
    lines.join("\n")
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header line '{line}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(h: &BTreeMap<String, String>, key: &str) -> Result<T> {
    h.get(key)
        .ok_or_else(|| Error::Format(format!("header lacks '{key}'")))?
        .parse()
        .map_err(|_| Error::Format(format!("header field '{key}' does not parse")))
}

fn sizes(h: &BTreeMap<String, String>, key: &str) -> Result<Vec<usize>> {
    let raw: String = field(h, key)?;
    raw.split(',')
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad layer size in '{key}'"))))
        .collect()
}

fn encode(agent: &SacAgent, trainer: Option<&Trainer>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    let header = header_text(agent, trainer.is_some());
    w.u32(header.len() as u32);
    w.0.extend_from_slice(header.as_bytes());
    w.array(&agent.actor);
    for p in agent.critics.iter().chain(&agent.targets) {
        w.array(p);
    }
    let Some(t) = trainer else {
        return w.0;
    };
    w.adam(&agent.actor_opt);
    agent.critic_opts.iter().for_each(|a| w.adam(a));
    w.u64(t.seed);
    w.u64(t.total_steps);
    w.u64(t.episodes_done);
    w.f64(t.episode_return);
    match t.env.pair() {
        Some(p) => {
            w.u8(1);
            w.f64(p.h1());
            w.f64(p.h2());
        }
        None => w.u8(0),
    }
    w.u32(t.env.steps());
    w.u64(t.buffer.len() as u64);
    for tr in t.buffer.iter() {
        w.f64(tr.state);
        w.f64(tr.action);
        w.f64(tr.reward);
        w.f64(tr.next_state);
        w.u8(u8::from(tr.done));
    }
    w.u64(t.history.len() as u64);
    for r in &t.history {
        w.u64(r.episode);
        w.f64(r.episode_return);
        w.u32(r.steps);
        w.f64(r.terminal_jain);
        w.f64(r.rolling_avg_return);
    }
    w.0
}

struct Decoded {
    agent: SacAgent,
    training: bool,
}

fn decode_agent(r: &mut Reader<'_>) -> Result<Decoded> {
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not an agent checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let h = parse_header(text)?;
    let actor_sizes = sizes(&h, "actor_sizes")?;
    let critic_sizes = sizes(&h, "critic_sizes")?;
    let hidden = actor_sizes[1..actor_sizes.len().saturating_sub(1)].to_vec();
    if actor_sizes.len() < 3
        || actor_sizes[0] != 1
        || actor_sizes[actor_sizes.len() - 1] != 2
        || critic_sizes.len() != actor_sizes.len()
        || critic_sizes[0] != 2
        || critic_sizes[critic_sizes.len() - 1] != 1
        || critic_sizes[1..critic_sizes.len() - 1] != hidden[..]
    {
        return Err(Error::Format("unsupported network architecture".into()));
    }
    let config = AgentConfig {
        gamma: field(&h, "gamma")?,
        alpha: field(&h, "alpha")?,
        tau: field(&h, "tau")?,
        learning_rate: field(&h, "learning_rate")?,
        buffer_capacity: field(&h, "buffer_capacity")?,
        batch_size: field(&h, "batch_size")?,
        max_episodes: field(&h, "max_episodes")?,
        score_window: field(&h, "score_window")?,
        stop_value: field(&h, "stop_value")?,
        hidden,
        warmup_steps: field(&h, "warmup_steps")?,
        updates_per_step: field(&h, "updates_per_step")?,
        adam_beta1: field(&h, "adam_beta1")?,
        adam_beta2: field(&h, "adam_beta2")?,
        adam_eps: field(&h, "adam_eps")?,
    };
    config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let training = field::<u8>(&h, "training_state")? == 1;
    let actor_net = Mlp::new(actor_sizes).map_err(|e| Error::Format(e.to_string()))?;
    let critic_net = Mlp::new(critic_sizes).map_err(|e| Error::Format(e.to_string()))?;
    let na = actor_net.param_count();
    let nc = critic_net.param_count();
    let actor = r.array(na)?;
    let q1 = r.array(nc)?;
    let q2 = r.array(nc)?;
    let t1 = r.array(nc)?;
    let t2 = r.array(nc)?;
    let adam = |n| Adam::new(n, config.adam_beta1, config.adam_beta2, config.adam_eps);
    let agent = SacAgent {
        actor_opt: adam(na),
        critic_opts: [adam(nc), adam(nc)],
        update_count: field(&h, "update_count")?,
        actor,
        critics: [q1, q2],
        targets: [t1, t2],
        actor_net,
        critic_net,
        config,
    };
    Ok(Decoded { agent, training })
}

pub fn encode_agent(agent: &SacAgent) -> Vec<u8> {
    encode(agent, None)
}

/// Decodes an agent from checkpoint bytes; any training section is skipped.
pub fn decode_agent_bytes(bytes: &[u8]) -> Result<SacAgent> {
    let mut r = Reader { bytes, pos: 0 };
    let d = decode_agent(&mut r)?;
    if !d.training {
        r.finish()?;
    }
    Ok(d.agent)
}

pub fn save_agent(agent: &SacAgent, path: &Path) -> Result<()> {
    fs::write(path, encode_agent(agent)).map_err(|e| Error::io(path, e))
}

pub fn load_agent(path: &Path) -> Result<SacAgent> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_agent_bytes(&bytes)
}

pub fn encode_trainer(trainer: &Trainer) -> Vec<u8> {
    encode(&trainer.agent, Some(trainer))
}

/// Restores a trainer; `env` supplies the link and reward models.
pub fn decode_trainer_bytes(bytes: &[u8], mut env: NomaEnv) -> Result<Trainer> {
    let mut r = Reader { bytes, pos: 0 };
    let Decoded { mut agent, training } = decode_agent(&mut r)?;
    if !training {
        return Err(Error::Format("checkpoint holds no training state".into()));
    }
    let na = agent.actor.len();
    let nc = agent.critics[0].len();
    agent.actor_opt = r.adam(na, &agent.actor_opt)?;
    agent.critic_opts = [r.adam(nc, &agent.critic_opts[0])?, r.adam(nc, &agent.critic_opts[1])?];
    let seed = r.u64()?;
    let total_steps = r.u64()?;
    let episodes_done = r.u64()?;
    let episode_return = r.f64()?;
    let pair = match r.u8()? {
        0 => None,
        1 => {
            let (h1, h2) = (r.f64()?, r.f64()?);
            Some(ChannelPair::new(h1, h2).map_err(|e| Error::Format(e.to_string()))?)
        }
        other => return Err(Error::Format(format!("bad episode flag {other}"))),
    };
    let steps = r.u32()?;
    env.restore(pair, steps);
    let mut buffer = ReplayBuffer::new(agent.config.buffer_capacity);
    let n = r.u64()?;
    if n as usize > agent.config.buffer_capacity {
        return Err(Error::Format("replay buffer exceeds its capacity".into()));
    }
    for _ in 0..n {
        buffer.push(Transition {
            state: r.f64()?,
            action: r.f64()?,
            reward: r.f64()?,
            next_state: r.f64()?,
            done: r.u8()? != 0,
        });
    }
    let n = r.u64()?;
    let mut history = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        history.push(EpisodeRecord {
            episode: r.u64()?,
            episode_return: r.f64()?,
            steps: r.u32()?,
            terminal_jain: r.f64()?,
            rolling_avg_return: r.f64()?,
        });
    }
    r.finish()?;
    let mut trainer = Trainer::new(env, agent.config.clone(), seed)?;
    trainer.agent = agent;
    trainer.buffer = buffer;
    trainer.total_steps = total_steps;
    trainer.episodes_done = episodes_done;
    trainer.episode_return = episode_return;
    trainer.history = history;
    trainer.rebuild_window();
    Ok(trainer)
}

pub fn save_trainer(trainer: &Trainer, path: &Path) -> Result<()> {
    fs::write(path, encode_trainer(trainer)).map_err(|e| Error::io(path, e))
}

pub fn load_trainer(path: &Path, env: NomaEnv) -> Result<Trainer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_trainer_bytes(&bytes, env)
}
