//! The `sanex` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use sanex_core::agent::{evaluate, Clock, EvalOptions, Trainer};
use sanex_core::diagnostics::{gradcheck_suite, sigma_probe, GradcheckOptions};
use sanex_core::envs::{make_env, Environment, RiskLabel};
use sanex_core::nncore::Strategy;
use sanex_core::numkit::Rng;

use crate::checkpoint::Checkpoint;
use crate::config_file::load_config;
use crate::metrics::write_metrics;
use crate::scores::{hns_report, load_baselines, load_reported, load_scores, load_subset};
use crate::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";

#[derive(Parser, Debug)]
#[command(name = "sanex", version, about = "State-aware noisy exploration workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an agent and write metrics.csv and checkpoint.ckpt.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Record elapsed milliseconds; otherwise the column is 0.
        #[arg(long)]
        wallclock: bool,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long, value_enum)]
        noise: Switch,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// Defaults to the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-state |sigma| of a SANE checkpoint.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
    },
    /// Human-normalized scores.
    ScoreHns {
        /// CSV `game,score` or `game,<agent>,<agent>...`.
        #[arg(long)]
        scores: PathBuf,
        /// Games to average, one per line; defaults to every scored game.
        #[arg(long)]
        subset: Option<PathBuf>,
        /// CSV `game,human,random`; defaults to the built-in table.
        #[arg(long)]
        baselines: Option<PathBuf>,
        /// CSV `agent,games,value` of published means to compare against.
        #[arg(long)]
        reported: Option<PathBuf>,
    },
    /// Finite-difference check of the batch-loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct SystemClock(Instant);

impl Clock for SystemClock {
    fn now_ms(&mut self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: kind={} msg={msg}", e.kind());
            1
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io("<stdout>", e))
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Train {
            config,
            seed,
            out: dir,
            wallclock,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut trainer = Trainer::new(&cfg)?;
            let mut clock = SystemClock(Instant::now());
            trainer.run(if wallclock { Some(&mut clock) } else { None })?;
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let metrics = dir.join(METRICS_FILE);
            let ckpt = dir.join(CHECKPOINT_FILE);
            write_metrics(trainer.metrics(), &metrics)?;
            Checkpoint::from_trainer(&trainer).save(&ckpt)?;
            let episodes = trainer.metrics().iter().filter(|r| r.episode_return.is_some()).count();
            emit(
                out,
                &format!(
                    "trained strategy={} steps={} updates={} episodes={episodes} metrics={} checkpoint={}\n",
                    cfg.strategy.name(),
                    trainer.steps_done(),
                    trainer.updates_done(),
                    metrics.display(),
                    ckpt.display()
                ),
            )
        }
        Command::Eval {
            checkpoint,
            episodes,
            noise,
            epsilon,
            seed,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let mut env = make_env(&ck.config.env)?.with_max_episode_steps(ck.config.max_episode_steps);
            if ck.config.random_start {
                env = env.with_random_start();
            }
            let opts = EvalOptions {
                episodes,
                noise: noise == Switch::On,
                epsilon,
            };
            let mut rng = Rng::new(seed.unwrap_or(ck.config.seed));
            let stats = evaluate(&ck.q, &mut env, &opts, &mut rng)?;
            emit(
                out,
                &format!(
                    "episodes={episodes} noise={} mean_return={:?} std_return={:?} mean_q={:?}\n",
                    if opts.noise { "on" } else { "off" },
                    stats.mean,
                    stats.std,
                    stats.mean_q
                ),
            )
        }
        Command::Probe { checkpoint, env } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let env = make_env(&env)?;
            let report = sigma_probe(&ck.q, &env.probe_states())?;
            let mut text = String::from("state,label,abs_sigma\n");
            for r in &report.records {
                text.push_str(&format!("{},{},{:?}\n", r.state, r.label.name(), r.abs_sigma));
            }
            for label in [RiskLabel::HighRisk, RiskLabel::LowRisk] {
                if let Some(m) = report.mean_for(label) {
                    text.push_str(&format!("# mean {} {m:?}\n", label.name()));
                }
            }
            emit(out, &text)
        }
        Command::ScoreHns {
            scores,
            subset,
            baselines,
            reported,
        } => {
            let table = load_scores(&scores)?;
            let base = load_baselines(baselines.as_deref())?;
            let subset = subset.as_deref().map(load_subset).transpose()?;
            let reported = load_reported(reported.as_deref())?;
            let report = hns_report(&table, &base, subset.as_deref())?;
            emit(out, &report.render(&reported))
        }
        Command::Gradcheck { nets, seed } => {
            let opts = GradcheckOptions {
                nets_per_strategy: nets,
                seed,
                ..GradcheckOptions::default()
            };
            let strategies = [Strategy::Plain, Strategy::NoisyNet, Strategy::SimpleSane, Strategy::QSane];
            let reports = gradcheck_suite(&strategies, &opts)?;
            let mut text = String::new();
            let mut failed = Vec::new();
            for r in &reports {
                let ok = r.passed(&opts);
                text.push_str(&format!(
                    "{} nets={} coords={} failures={} worst_rel={:e} {}\n",
                    r.strategy.name(),
                    r.nets,
                    r.coords,
                    r.failures,
                    r.worst_rel,
                    if ok { "ok" } else { "FAILED" }
                ));
                if !ok {
                    failed.push(r.strategy.name());
                }
            }
            emit(out, &text)?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(format!("gradient check failed for {}", failed.join(","))))
            }
        }
    }
}
