//! Deterministic tabular environments with risk-labelled states, and a
//! value-iteration oracle.
//!
//! Both built-in environments are [`TabularEnv`]s: a [`TabularMdp`] plus an
//! observation vector and risk label per state.
//!
//! * `chain-N`: states `0..N` plus an absorbing terminal `N`. Action 0 moves
//!   left (staying put at 0), action 1 moves right; entering the terminal
//!   pays 1. Observations are one-hot of width `N + 1`.
//! * `cliff_bridge-WxL`: a `W x W` open field whose middle row continues
//!   into a bridge of `L` cells. Actions are up, down, left, right. Walls
//!   bound the field; moving up or down on the bridge falls off (reward -1,
//!   episode over); moving right off the last bridge cell reaches the goal
//!   (reward 1). Observations are `[x / (W + L), y / (W - 1), in_field,
//!   on_bridge]`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::{Mat, Rng};
use crate::{Error, Result};

pub const DEFAULT_CHAIN_LEN: usize = 5;
pub const DEFAULT_FIELD_WIDTH: usize = 5;
pub const DEFAULT_BRIDGE_LEN: usize = 6;
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvSpec {
    pub name: String,
    pub obs_width: usize,
    pub actions: usize,
    pub max_episode_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Mat,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RiskLabel {
    LowRisk,
    HighRisk,
}

impl RiskLabel {
    pub fn name(self) -> &'static str {
        match self {
            RiskLabel::LowRisk => "low_risk",
            RiskLabel::HighRisk => "high_risk",
        }
    }
}

/// Deterministic finite MDP with tables indexed by `s * n_actions + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    next: Vec<usize>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(n_states: usize, n_actions: usize, next: Vec<usize>, reward: Vec<f64>, terminal: Vec<bool>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument("MDP needs at least one state and action".to_string()));
        }
        let n = n_states * n_actions;
        if next.len() != n || reward.len() != n || terminal.len() != n_states {
            return Err(Error::InvalidArgument("MDP table sizes do not match".to_string()));
        }
        if let Some(&bad) = next.iter().find(|&&s| s >= n_states) {
            return Err(Error::InvalidArgument(format!("transition target {bad} out of range")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("rewards must be finite".to_string()));
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            next,
            reward,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn next(&self, s: usize, a: usize) -> usize {
        self.next[s * self.n_actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }
}

/// Action values of a tabular MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index maximizing action.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }
}

/// Index of the largest entry, ties broken toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Bellman optimality iteration until the max-norm change is below `tol`.
/// Terminal states have value 0.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<QTable> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("value iteration needs 0 <= gamma < 1, got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![0.0; ns * na];
    loop {
        let v: Vec<f64> = (0..ns)
            .map(|s| {
                if mdp.terminal[s] {
                    0.0
                } else {
                    q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let mut change = 0.0f64;
        for s in 0..ns {
            if mdp.terminal[s] {
                continue;
            }
            for a in 0..na {
                let k = s * na + a;
                let updated = mdp.reward[k] + gamma * v[mdp.next[k]];
                change = change.max(libm::fabs(updated - q[k]));
                q[k] = updated;
            }
        }
        if change < tol {
            return Ok(QTable { n_actions: na, values: q });
        }
    }
}

/// A state offered to the σ probe.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeState {
    pub id: usize,
    pub label: RiskLabel,
    pub observation: Mat,
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, rng: &mut Rng) -> Mat;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    /// Every non-terminal state with its risk label.
    fn probe_states(&self) -> Vec<ProbeState>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularEnv {
    spec: EnvSpec,
    mdp: TabularMdp,
    observations: Vec<Vec<f64>>,
    labels: Vec<RiskLabel>,
    start: usize,
    random_starts: Option<Vec<usize>>,
    state: usize,
    done: bool,
}

impl TabularEnv {
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn label(&self, s: usize) -> RiskLabel {
        self.labels[s]
    }

    pub fn observation(&self, s: usize) -> Mat {
        Mat::column(&self.observations[s])
    }

    /// Start from a uniformly random safe state on every reset.
    pub fn with_random_start(mut self) -> Self {
        let starts = (0..self.mdp.n_states)
            .filter(|&s| !self.mdp.terminal[s] && self.labels[s] == RiskLabel::LowRisk)
            .collect();
        self.random_starts = Some(starts);
        self
    }

    pub fn with_max_episode_steps(mut self, steps: usize) -> Self {
        self.spec.max_episode_steps = steps;
        self
    }
}

impl Environment for TabularEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Mat {
        self.state = match &self.random_starts {
            Some(starts) => starts[rng.below(starts.len())],
            None => self.start,
        };
        self.done = false;
        self.observation(self.state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        if action >= self.mdp.n_actions {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range for {} actions",
                self.mdp.n_actions
            )));
        }
        let reward = self.mdp.reward(self.state, action);
        self.state = self.mdp.next(self.state, action);
        self.done = self.mdp.terminal[self.state];
        Ok(StepResult {
            observation: self.observation(self.state),
            reward,
            done: self.done,
        })
    }

    fn probe_states(&self) -> Vec<ProbeState> {
        (0..self.mdp.n_states)
            .filter(|&s| !self.mdp.terminal[s])
            .map(|s| ProbeState {
                id: s,
                label: self.labels[s],
                observation: self.observation(s),
            })
            .collect()
    }
}

/// `n` non-terminal states in a row followed by a rewarding terminal.
pub fn chain_mdp(n: usize) -> Result<TabularEnv> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one state".to_string()));
    }
    let ns = n + 1;
    let mut next = Vec::with_capacity(ns * 2);
    let mut reward = Vec::with_capacity(ns * 2);
    for s in 0..ns {
        if s == n {
            next.extend([n, n]);
            reward.extend([0.0, 0.0]);
        } else {
            next.extend([s.saturating_sub(1), s + 1]);
            reward.extend([0.0, if s + 1 == n { 1.0 } else { 0.0 }]);
        }
    }
    let mut terminal = vec![false; ns];
    terminal[n] = true;
    let observations = (0..ns)
        .map(|s| {
            let mut o = vec![0.0; ns];
            o[s] = 1.0;
            o
        })
        .collect();
    Ok(TabularEnv {
        spec: EnvSpec {
            name: format!("chain-{n}"),
            obs_width: ns,
            actions: 2,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
        },
        mdp: TabularMdp::new(ns, 2, next, reward, terminal)?,
        observations,
        labels: vec![RiskLabel::LowRisk; ns],
        start: 0,
        random_starts: None,
        state: 0,
        done: false,
    })
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Open field of `width x width` cells feeding a one-cell-wide bridge.
pub fn cliff_bridge(width: usize, bridge_len: usize) -> Result<TabularEnv> {
    if width == 0 || bridge_len == 0 {
        return Err(Error::InvalidArgument("cliff_bridge needs positive width and bridge length".to_string()));
    }
    let mid = width / 2;
    let field = width * width;
    let goal = field + bridge_len;
    let cliff = goal + 1;
    let ns = cliff + 1;
    let cell = |x: usize, y: usize| -> usize {
        if x < width {
            y * width + x
        } else if x < width + bridge_len {
            field + (x - width)
        } else {
            goal
        }
    };
    let mut next = vec![0; ns * 4];
    let mut reward = vec![0.0; ns * 4];
    let mut terminal = vec![false; ns];
    terminal[goal] = true;
    terminal[cliff] = true;
    let mut observations = vec![Vec::new(); ns];
    let mut labels = vec![RiskLabel::LowRisk; ns];
    let span = (width + bridge_len) as f64;
    let yscale = if width > 1 { (width - 1) as f64 } else { 1.0 };

    for y in 0..width {
        for x in 0..width {
            let s = cell(x, y);
            observations[s] = vec![x as f64 / span, y as f64 / yscale, 1.0, 0.0];
            let moves = [
                cell(x, y.saturating_sub(1)),
                cell(x, (y + 1).min(width - 1)),
                cell(x.saturating_sub(1), y),
                if x + 1 < width || y == mid { cell(x + 1, y) } else { s },
            ];
            next[s * 4..s * 4 + 4].copy_from_slice(&moves);
        }
    }
    for k in 0..bridge_len {
        let x = width + k;
        let s = cell(x, mid);
        observations[s] = vec![x as f64 / span, mid as f64 / yscale, 0.0, 1.0];
        labels[s] = RiskLabel::HighRisk;
        next[s * 4 + UP] = cliff;
        next[s * 4 + DOWN] = cliff;
        reward[s * 4 + UP] = -1.0;
        reward[s * 4 + DOWN] = -1.0;
        next[s * 4 + LEFT] = cell(x - 1, mid);
        next[s * 4 + RIGHT] = cell(x + 1, mid);
        if k + 1 == bridge_len {
            reward[s * 4 + RIGHT] = 1.0;
        }
    }
    for t in [goal, cliff] {
        next[t * 4..t * 4 + 4].copy_from_slice(&[t; 4]);
    }
    observations[goal] = vec![1.0, mid as f64 / yscale, 0.0, 0.0];
    observations[cliff] = vec![0.0; 4];

    Ok(TabularEnv {
        spec: EnvSpec {
            name: format!("cliff_bridge-{width}x{bridge_len}"),
            obs_width: 4,
            actions: 4,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
        },
        mdp: TabularMdp::new(ns, 4, next, reward, terminal)?,
        observations,
        labels,
        start: cell(0, mid),
        random_starts: None,
        state: cell(0, mid),
        done: false,
    })
}

/// Builds an environment from its registry name: `chain`, `chain-N`,
/// `cliff_bridge` or `cliff_bridge-WxL`.
pub fn make_env(name: &str) -> Result<TabularEnv> {
    let unknown = || Error::UnknownEnv(name.to_string());
    let parse = |s: &str| s.parse::<usize>().map_err(|_| unknown());
    if name == "chain" {
        return chain_mdp(DEFAULT_CHAIN_LEN);
    }
    if name == "cliff_bridge" {
        return cliff_bridge(DEFAULT_FIELD_WIDTH, DEFAULT_BRIDGE_LEN);
    }
    if let Some(n) = name.strip_prefix("chain-") {
        return chain_mdp(parse(n)?);
    }
    if let Some(dims) = name.strip_prefix("cliff_bridge-") {
        let (w, l) = dims.split_once('x').ok_or_else(unknown)?;
        return cliff_bridge(parse(w)?, parse(l)?);
    }
    Err(unknown())
}
