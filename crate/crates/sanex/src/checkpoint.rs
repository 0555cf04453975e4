//! Versioned text checkpoints.
//!
//! ```text
//! SANEX-CKPT-v1
//! [config]
//! strategy = simple_sane
//! ...
//! [state]
//! step = 1000
//! ...
//! [arrays]
//! q.encoder.0.w 32 6
//! 0.1 -0.25 ...
//! ```
//!
//! Every array is a `name rows cols` line followed by one line holding its
//! values in row-major order. Floats are written in shortest round-trip form,
//! so loading reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sanex_core::agent::{RngStreams, TrainConfig, Trainer};
use sanex_core::envs::{make_env, Environment};
use sanex_core::nncore::QNetwork;
use sanex_core::numkit::{AdamState, Mat, Rng};

use crate::config_file::{parse_config, render_config};
use crate::CliError;

pub const CHECKPOINT_MAGIC: &str = "SANEX-CKPT-v1";

/// Everything needed to evaluate or inspect a run. Gradient buffers are
/// scratch space and are not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: u64,
    pub updates: u64,
    pub q: QNetwork,
    pub target: QNetwork,
    pub adam: AdamState,
    pub streams: RngStreams,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        let (mut q, mut target) = (t.q.clone(), t.target.clone());
        q.zero_grad();
        target.zero_grad();
        Checkpoint {
            config: t.config().clone(),
            step: t.steps_done(),
            updates: t.updates_done(),
            q,
            target,
            adam: t.adam.clone(),
            streams: t.streams.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push_str("\n[config]\n");
        out.push_str(&render_config(&self.config));
        out.push_str("[state]\n");
        let s = &self.streams;
        for (k, v) in [
            ("step", self.step),
            ("updates", self.updates),
            ("adam_t", self.adam.t),
            ("rng_env", s.env.state()),
            ("rng_action", s.action.state()),
            ("rng_replay", s.replay.state()),
            ("rng_noise", s.noise.state()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("[arrays]\n");
        for (prefix, net) in [("q", &self.q), ("target", &self.target)] {
            net.visit(|id, p, _| push_array(&mut out, &format!("{prefix}.{id}"), p.rows(), p.cols(), p.as_slice()));
        }
        push_array(&mut out, "adam.m", self.adam.m.len(), 1, &self.adam.m);
        push_array(&mut out, "adam.v", self.adam.v.len(), 1, &self.adam.v);
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let err = |line: usize, msg: String| CliError::format(path, line, msg);
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, CHECKPOINT_MAGIC)) => {}
            _ => return Err(err(1, format!("missing `{CHECKPOINT_MAGIC}` header"))),
        }
        let expect_section = |got: Option<(usize, &str)>, name: &str| match got {
            Some((_, l)) if l == name => Ok(()),
            Some((n, l)) => Err(err(n, format!("expected `{name}`, got `{l}`"))),
            None => Err(err(0, format!("missing `{name}` section"))),
        };
        expect_section(lines.next(), "[config]")?;

        let mut config_text = String::new();
        let config_start = 3;
        let mut next = lines.next();
        while let Some((_, l)) = next {
            if l.starts_with('[') {
                break;
            }
            config_text.push_str(l);
            config_text.push('\n');
            next = lines.next();
        }
        let config = parse_config(&config_text, path).map_err(|e| match e {
            CliError::Format { line, msg, .. } => err(line + config_start - 1, msg),
            other => other,
        })?;
        config.validate().map_err(|e| err(0, e.to_string()))?;

        expect_section(next, "[state]")?;
        let mut state = BTreeMap::new();
        next = lines.next();
        while let Some((n, l)) = next {
            if l.starts_with('[') {
                break;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| err(n, format!("expected `key = value`, got `{l}`")))?;
            let v: u64 = v.trim().parse().map_err(|_| err(n, format!("bad integer for `{}`", k.trim())))?;
            state.insert(k.trim().to_string(), v);
            next = lines.next();
        }
        let get = |k: &str| state.get(k).copied().ok_or_else(|| err(0, format!("missing state `{k}`")));

        expect_section(next, "[arrays]")?;
        let mut arrays: BTreeMap<String, (usize, Mat)> = BTreeMap::new();
        while let Some((n, head)) = lines.next() {
            let parts: Vec<&str> = head.split_whitespace().collect();
            let [name, rows, cols] = parts[..] else {
                return Err(err(n, format!("expected `name rows cols`, got `{head}`")));
            };
            let rows: usize = rows.parse().map_err(|_| err(n, "bad row count".into()))?;
            let cols: usize = cols.parse().map_err(|_| err(n, "bad column count".into()))?;
            let (vn, values) = lines.next().ok_or_else(|| err(n, format!("missing values for `{name}`")))?;
            let data = values
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err(vn, format!("bad number in `{name}`")))?;
            let m = Mat::from_vec(rows, cols, data).map_err(|e| err(vn, format!("`{name}`: {e}")))?;
            if arrays.insert(name.to_string(), (n, m)).is_some() {
                return Err(err(n, format!("duplicate array `{name}`")));
            }
        }

        let env = make_env(&config.env).map_err(CliError::from)?;
        let shape = config.net_shape(env.spec().obs_width, env.spec().actions);
        let skeleton = QNetwork::init(config.strategy, &shape, &mut Rng::new(0))?;
        let q = fill_network(&skeleton, "q", &mut arrays, path)?;
        let target = fill_network(&skeleton, "target", &mut arrays, path)?;
        let mut take_vec = |name: &str| -> Result<Vec<f64>, CliError> {
            let (n, m) = arrays.remove(name).ok_or_else(|| err(0, format!("missing array `{name}`")))?;
            if m.shape() != (q.param_count(), 1) {
                return Err(err(n, format!("`{name}` has shape {:?}, expected ({}, 1)", m.shape(), q.param_count())));
            }
            Ok(m.into_vec())
        };
        let adam_m = take_vec("adam.m")?;
        let adam_v = take_vec("adam.v")?;
        if let Some((name, (n, _))) = arrays.into_iter().next() {
            return Err(err(n, format!("unexpected array `{name}`")));
        }

        let mut adam = AdamState::new(q.param_count(), config.lr, config.adam_eps)
            .with_betas(config.adam_beta1, config.adam_beta2);
        adam.m = adam_m;
        adam.v = adam_v;
        adam.t = get("adam_t")?;
        Ok(Checkpoint {
            step: get("step")?,
            updates: get("updates")?,
            streams: RngStreams {
                env: Rng::from_state(get("rng_env")?),
                action: Rng::from_state(get("rng_action")?),
                replay: Rng::from_state(get("rng_replay")?),
                noise: Rng::from_state(get("rng_noise")?),
            },
            config,
            q,
            target,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Checkpoint::parse(&text, path)
    }
}

fn push_array(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    let _ = writeln!(out, "{name} {rows} {cols}");
    let mut first = true;
    for v in data {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

fn fill_network(
    skeleton: &QNetwork,
    prefix: &str,
    arrays: &mut BTreeMap<String, (usize, Mat)>,
    path: &Path,
) -> Result<QNetwork, CliError> {
    let mut net = skeleton.clone();
    let mut failure = None;
    net.visit_mut(|id, p, _| {
        if failure.is_some() {
            return;
        }
        let name = format!("{prefix}.{id}");
        match arrays.remove(&name) {
            None => failure = Some(CliError::format(path, 0, format!("missing array `{name}`"))),
            Some((n, m)) if m.shape() != p.shape() => {
                failure = Some(CliError::format(
                    path,
                    n,
                    format!("`{name}` has shape {:?}, expected {:?}", m.shape(), p.shape()),
                ))
            }
            Some((_, m)) => *p = m,
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(net),
    }
}
