use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::envs::make_env;
use crate::nncore::{NetShape, Strategy};
use crate::{Error, Result};

/// Everything that determines a training run.
///
/// Defaults keep the DQN schedule constants (update every 4 steps, batch 32,
/// γ = 0.99, Adam α = 6.25e-5 and ε = 1.5e-4) with buffer, warmup and
/// target-copy sizes scaled down for small environments.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub env: String,
    pub strategy: Strategy,
    pub gamma: f64,
    pub lr: f64,
    pub adam_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub update_frequency: usize,
    pub copy_frequency: usize,
    pub buffer_capacity: usize,
    pub warmup_transitions: usize,
    pub max_steps: usize,
    pub max_episode_steps: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// `None` anneals over the first 10% of `max_steps`.
    pub epsilon_anneal_steps: Option<usize>,
    pub seed: u64,
    pub eval_episodes: usize,
    pub eval_noise: bool,
    pub clip_rewards: bool,
    pub random_start: bool,
    pub encoder: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub sane_hidden: usize,
    pub noisy_sigma0: f64,
    /// A metrics row is also emitted every `log_interval` steps.
    pub log_interval: usize,
    /// Variance of the fixed posterior blocks in the logged KL term.
    pub kl_epsilon: f64,
    /// Compute the Q-network's noise scale from `s'` instead of `s` during
    /// updates.
    pub sigma_from_next_state: bool,
    /// Discard gradients of noise parameters so they keep their initial
    /// values.
    pub freeze_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: "cliff_bridge".to_string(),
            strategy: Strategy::SimpleSane,
            gamma: 0.99,
            lr: 6.25e-5,
            adam_eps: 1.5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            batch_size: 32,
            update_frequency: 4,
            copy_frequency: 1_000,
            buffer_capacity: 50_000,
            warmup_transitions: 1_000,
            max_steps: 100_000,
            max_episode_steps: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_anneal_steps: None,
            seed: 0,
            eval_episodes: 10,
            eval_noise: false,
            clip_rewards: true,
            random_start: false,
            encoder: vec![32],
            head_hidden: vec![32],
            sane_hidden: 256,
            noisy_sigma0: 0.5,
            log_interval: 1_000,
            kl_epsilon: 1e-12,
            sigma_from_next_state: false,
            freeze_noise: false,
        }
    }
}

fn parse<T: core::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("expected a boolean for `{key}`, got `{value}`"))),
    }
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|w| parse(key, w.trim())).collect()
}

fn widths(ws: &[usize]) -> String {
    ws.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Every key accepted by [`TrainConfig::set`], in [`TrainConfig::to_pairs`] order.
    pub const KEYS: [&'static str; 30] = [
        "env",
        "strategy",
        "gamma",
        "lr",
        "adam_eps",
        "adam_beta1",
        "adam_beta2",
        "batch_size",
        "update_frequency",
        "copy_frequency",
        "buffer_capacity",
        "warmup_transitions",
        "max_steps",
        "max_episode_steps",
        "epsilon_start",
        "epsilon_end",
        "epsilon_anneal_steps",
        "seed",
        "eval_episodes",
        "eval_noise",
        "clip_rewards",
        "random_start",
        "encoder",
        "head_hidden",
        "sane_hidden",
        "noisy_sigma0",
        "log_interval",
        "kl_epsilon",
        "sigma_from_next_state",
        "freeze_noise",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "env" => self.env = v.to_string(),
            "strategy" => self.strategy = v.parse()?,
            "gamma" => self.gamma = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "update_frequency" => self.update_frequency = parse(key, v)?,
            "copy_frequency" => self.copy_frequency = parse(key, v)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, v)?,
            "warmup_transitions" => self.warmup_transitions = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "max_episode_steps" => self.max_episode_steps = parse(key, v)?,
            "epsilon_start" => self.epsilon_start = parse(key, v)?,
            "epsilon_end" => self.epsilon_end = parse(key, v)?,
            "epsilon_anneal_steps" => {
                self.epsilon_anneal_steps = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "seed" => self.seed = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "eval_noise" => self.eval_noise = parse_bool(key, v)?,
            "clip_rewards" => self.clip_rewards = parse_bool(key, v)?,
            "random_start" => self.random_start = parse_bool(key, v)?,
            "encoder" => self.encoder = parse_widths(key, v)?,
            "head_hidden" => self.head_hidden = parse_widths(key, v)?,
            "sane_hidden" => self.sane_hidden = parse(key, v)?,
            "noisy_sigma0" => self.noisy_sigma0 = parse(key, v)?,
            "log_interval" => self.log_interval = parse(key, v)?,
            "kl_epsilon" => self.kl_epsilon = parse(key, v)?,
            "sigma_from_next_state" => self.sigma_from_next_state = parse_bool(key, v)?,
            "freeze_noise" => self.freeze_noise = parse_bool(key, v)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs that [`TrainConfig::set`] reads back exactly.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let f = |x: f64| format!("{x:?}");
        let values = [
            self.env.clone(),
            self.strategy.name().to_string(),
            f(self.gamma),
            f(self.lr),
            f(self.adam_eps),
            f(self.adam_beta1),
            f(self.adam_beta2),
            self.batch_size.to_string(),
            self.update_frequency.to_string(),
            self.copy_frequency.to_string(),
            self.buffer_capacity.to_string(),
            self.warmup_transitions.to_string(),
            self.max_steps.to_string(),
            self.max_episode_steps.to_string(),
            f(self.epsilon_start),
            f(self.epsilon_end),
            self.epsilon_anneal_steps.map_or("auto".to_string(), |s| s.to_string()),
            self.seed.to_string(),
            self.eval_episodes.to_string(),
            self.eval_noise.to_string(),
            self.clip_rewards.to_string(),
            self.random_start.to_string(),
            widths(&self.encoder),
            widths(&self.head_hidden),
            self.sane_hidden.to_string(),
            f(self.noisy_sigma0),
            self.log_interval.to_string(),
            f(self.kl_epsilon),
            self.sigma_from_next_state.to_string(),
            self.freeze_noise.to_string(),
        ];
        Self::KEYS.into_iter().zip(values).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) || !(self.kl_epsilon > 0.0) {
            return fail("lr, adam_eps and kl_epsilon must be positive");
        }
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) {
            return fail("Adam betas must lie in (0, 1)");
        }
        let counts = [
            self.batch_size,
            self.update_frequency,
            self.copy_frequency,
            self.buffer_capacity,
            self.max_episode_steps,
            self.sane_hidden,
            self.log_interval,
        ];
        if counts.contains(&0) || self.encoder.contains(&0) || self.head_hidden.contains(&0) {
            return fail("counts and layer widths must be positive");
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.epsilon_start) || !prob(self.epsilon_end) {
            return fail("epsilon values must lie in [0, 1]");
        }
        if self.epsilon_anneal_steps == Some(0) {
            return fail("epsilon_anneal_steps must be positive");
        }
        if !(self.noisy_sigma0 >= 0.0) || !self.noisy_sigma0.is_finite() {
            return fail("noisy_sigma0 must be finite and non-negative");
        }
        make_env(&self.env)?;
        Ok(())
    }

    pub fn net_shape(&self, obs_width: usize, actions: usize) -> NetShape {
        NetShape {
            obs_width,
            encoder: self.encoder.clone(),
            head_hidden: self.head_hidden.clone(),
            actions,
            sane_hidden: self.sane_hidden,
            noisy_sigma0: self.noisy_sigma0,
        }
    }

    /// Linear anneal from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon_at(&self, step: usize) -> f64 {
        let span = self.epsilon_anneal_steps.unwrap_or(self.max_steps / 10).max(1);
        if step >= span {
            return self.epsilon_end;
        }
        let frac = step as f64 / span as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}
