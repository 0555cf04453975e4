use alloc::vec::Vec;

use super::config::TrainConfig;
use super::learner::{batch_loss_and_grads, select_action, target_sync, LossOptions};
use super::replay::{ReplayBuffer, Transition};
use crate::diagnostics::{noisynet_kl, sane_batch_kl};
use crate::envs::{argmax, make_env, Environment, TabularEnv};
use crate::nncore::{QNetwork, Strategy};
use crate::noisy::{q_forward, ForwardMode};
use crate::numkit::{AdamState, Mat, Rng};
use crate::{Error, Result};

/// Millisecond source for the `wallclock_ms` column.
pub trait Clock {
    fn now_ms(&mut self) -> u64;
}

/// One logged record. Episode-end rows carry `episode_return`; periodic rows
/// carry `kl_term` when the strategy has one.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u64,
    /// Unclipped.
    pub episode_return: Option<f64>,
    /// Loss of the most recent batch update.
    pub loss: Option<f64>,
    pub mean_abs_sigma: Option<f64>,
    pub kl_term: Option<f64>,
    /// Zero unless a [`Clock`] is supplied.
    pub wallclock_ms: u64,
}

/// Independent generator streams, all derived from the run seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RngStreams {
    pub env: Rng,
    pub action: Rng,
    pub replay: Rng,
    pub noise: Rng,
}

impl RngStreams {
    /// Streams are forked from `Rng::new(seed)` in the order init, env,
    /// action, replay, noise; the init stream is returned separately.
    pub fn from_seed(seed: u64) -> (Rng, RngStreams) {
        let mut master = Rng::new(seed);
        let init = master.fork();
        let streams = RngStreams {
            env: master.fork(),
            action: master.fork(),
            replay: master.fork(),
            noise: master.fork(),
        };
        (init, streams)
    }
}

/// A DQN training run in progress.
///
/// Each call to [`Trainer::step`] acts once, stores the transition, runs a
/// batch update when `step > warmup` and `(step - warmup)` is a multiple of
/// `update_frequency`, and copies the Q-network into the target every
/// `copy_frequency` steps. Episodes hitting `max_episode_steps` are cut off
/// without marking the last transition terminal.
#[derive(Clone, Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    env: TabularEnv,
    pub q: QNetwork,
    pub target: QNetwork,
    pub adam: AdamState,
    pub streams: RngStreams,
    buffer: ReplayBuffer,
    step: u64,
    episode: u64,
    updates: u64,
    obs: Mat,
    episode_return: f64,
    episode_len: usize,
    last_loss: Option<f64>,
    last_sigma: Option<f64>,
    last_states: Vec<Mat>,
    metrics: Vec<MetricsRow>,
    started_ms: Option<u64>,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = make_env(&cfg.env)?;
        let (mut init, _) = RngStreams::from_seed(cfg.seed);
        let q = QNetwork::init(
            cfg.strategy,
            &cfg.net_shape(env.spec().obs_width, env.spec().actions),
            &mut init,
        )?;
        Trainer::with_network(cfg, q)
    }

    /// Starts from the given network instead of a fresh initialization.
    pub fn with_network(cfg: &TrainConfig, q: QNetwork) -> Result<Self> {
        cfg.validate()?;
        let mut env = make_env(&cfg.env)?.with_max_episode_steps(cfg.max_episode_steps);
        if cfg.random_start {
            env = env.with_random_start();
        }
        if q.strategy != cfg.strategy {
            return Err(Error::InvalidConfig("network strategy differs from config".into()));
        }
        if q.obs_width() != env.spec().obs_width || q.actions() != env.spec().actions {
            return Err(Error::ShapeMismatch {
                context: "network for environment",
                expected: (env.spec().obs_width, env.spec().actions),
                found: (q.obs_width(), q.actions()),
            });
        }
        let (_, mut streams) = RngStreams::from_seed(cfg.seed);
        let obs = env.reset(&mut streams.env);
        let adam = AdamState::new(q.param_count(), cfg.lr, cfg.adam_eps).with_betas(cfg.adam_beta1, cfg.adam_beta2);
        Ok(Trainer {
            cfg: cfg.clone(),
            env,
            target: target_sync(&q),
            q,
            adam,
            streams,
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            step: 0,
            episode: 0,
            updates: 0,
            obs,
            episode_return: 0.0,
            episode_len: 0,
            last_loss: None,
            last_sigma: None,
            last_states: Vec::new(),
            metrics: Vec::new(),
            started_ms: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn env(&self) -> &TabularEnv {
        &self.env
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn updates_done(&self) -> u64 {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn finished(&self) -> bool {
        self.step >= self.cfg.max_steps as u64
    }

    /// Runs until `max_steps`.
    pub fn run(&mut self, mut clock: Option<&mut dyn Clock>) -> Result<()> {
        while !self.finished() {
            match clock {
                Some(ref mut c) => self.step(Some(&mut **c))?,
                None => self.step(None)?,
            };
        }
        Ok(())
    }

    /// One environment step plus any scheduled update and copy. Returns the
    /// action taken.
    pub fn step(&mut self, clock: Option<&mut dyn Clock>) -> Result<usize> {
        let now = clock.map(|c| c.now_ms());
        if self.started_ms.is_none() {
            self.started_ms = now;
        }
        let wallclock = match (now, self.started_ms) {
            (Some(n), Some(s)) => n.saturating_sub(s),
            _ => 0,
        };
        let t = self.step as usize;
        self.step += 1;
        let warm = self.step <= self.cfg.warmup_transitions as u64;
        let action = if warm && self.cfg.strategy == Strategy::EpsilonGreedy {
            self.streams.action.below(self.q.actions())
        } else {
            select_action(&self.q, &self.obs, &mut self.streams.action, self.cfg.epsilon_at(t))?
        };
        let out = self.env.step(action)?;
        self.episode_return += out.reward;
        self.episode_len += 1;
        let r = if self.cfg.clip_rewards { out.reward.clamp(-1.0, 1.0) } else { out.reward };
        let cut = !out.done && self.episode_len >= self.cfg.max_episode_steps;
        let next = out.observation;
        self.buffer.push(Transition {
            s: core::mem::replace(&mut self.obs, next.clone()),
            a: action,
            r,
            s_next: next,
            done: out.done,
        });

        let warmup = self.cfg.warmup_transitions as u64;
        if self.step > warmup && (self.step - warmup) % self.cfg.update_frequency as u64 == 0 {
            self.update()?;
        }
        if self.step % self.cfg.copy_frequency as u64 == 0 {
            self.target = target_sync(&self.q);
        }
        if out.done || cut {
            self.metrics.push(MetricsRow {
                step: self.step,
                episode: self.episode,
                episode_return: Some(self.episode_return),
                loss: self.last_loss,
                mean_abs_sigma: self.last_sigma,
                kl_term: None,
                wallclock_ms: wallclock,
            });
            self.episode += 1;
            self.episode_return = 0.0;
            self.episode_len = 0;
            self.obs = self.env.reset(&mut self.streams.env);
        }
        if self.step % self.cfg.log_interval as u64 == 0 {
            self.metrics.push(MetricsRow {
                step: self.step,
                episode: self.episode,
                episode_return: None,
                loss: self.last_loss,
                mean_abs_sigma: self.last_sigma,
                kl_term: self.kl_term(),
                wallclock_ms: wallclock,
            });
        }
        Ok(action)
    }

    fn update(&mut self) -> Result<()> {
        let batch = self.buffer.sample_batch(&mut self.streams.replay, self.cfg.batch_size)?;
        let opts = LossOptions {
            sigma_from_next_state: self.cfg.sigma_from_next_state,
        };
        let out = batch_loss_and_grads(&mut self.q, &self.target, &batch, &mut self.streams.noise, self.cfg.gamma, opts)?;
        if !out.loss.is_finite() {
            return Err(Error::NanLoss { step: self.step });
        }
        if self.cfg.strategy.is_sane() {
            self.last_states = batch.iter().map(|t| t.s.clone()).collect();
        }
        if self.cfg.freeze_noise {
            self.q.visit_mut(|id, _, g| {
                if id.is_noise() {
                    g.fill(0.0);
                }
            });
        }
        let mut params = self.q.params_flat();
        self.adam.step(&mut params, &self.q.grads_flat())?;
        self.q.set_params_flat(&params)?;
        self.last_loss = Some(out.loss);
        self.last_sigma = out.mean_abs_sigma();
        self.updates += 1;
        Ok(())
    }

    fn kl_term(&self) -> Option<f64> {
        let eps = self.cfg.kl_epsilon;
        match self.cfg.strategy {
            Strategy::NoisyNet => noisynet_kl(&self.q, eps).ok().map(|k| k.total()),
            Strategy::SimpleSane | Strategy::QSane if !self.last_states.is_empty() => {
                sane_batch_kl(&self.q, &self.last_states, eps).ok().map(|k| k.total())
            }
            _ => None,
        }
    }
}

/// Runs a full training job from `cfg`.
pub fn train_loop(cfg: &TrainConfig) -> Result<Trainer> {
    let mut trainer = Trainer::new(cfg)?;
    trainer.run(None)?;
    Ok(trainer)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    /// Perturb the head on every forward pass.
    pub noise: bool,
    /// Probability of replacing the greedy action with a uniform one.
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Unclipped undiscounted return per episode.
    pub returns: Vec<f64>,
    /// Mean over all steps of the maximal action value seen.
    pub mean_q: f64,
}

/// Greedy rollouts capped at the environment's `max_episode_steps`.
pub fn evaluate<E: Environment>(params: &QNetwork, env: &mut E, opts: &EvalOptions, rng: &mut Rng) -> Result<EvalStats> {
    if opts.episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mode = if opts.noise { ForwardMode::Noisy } else { ForwardMode::Clean };
    let mut returns = Vec::with_capacity(opts.episodes);
    let mut q_sum = 0.0;
    let mut q_count = 0usize;
    for _ in 0..opts.episodes {
        let mut obs = env.reset(rng);
        let mut total = 0.0;
        for _ in 0..env.spec().max_episode_steps {
            let q = q_forward(params, &obs, rng, mode)?.q;
            q_sum += q.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            q_count += 1;
            let mut a = argmax(q.as_slice());
            if opts.epsilon > 0.0 && rng.next_f64() < opts.epsilon {
                a = rng.below(env.spec().actions);
            }
            let out = env.step(a)?;
            total += out.reward;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalStats {
        mean,
        std: libm::sqrt(var),
        returns,
        mean_q: if q_count == 0 { 0.0 } else { q_sum / q_count as f64 },
    })
}
