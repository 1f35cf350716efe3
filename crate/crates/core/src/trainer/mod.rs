//! PPO / MAPPO training.
//!
//! Each update collects `num_envs × steps_per_env` stochastic transitions,
//! computes GAE advantages per action stream, and runs `epochs` passes of
//! clipped-surrogate minibatch updates. The centralised actor learns from the
//! team reward; each distributed actor learns from its own mixed reward against
//! the shared critic, which regresses on returns of the agents' mean reward.
//!
//! Output directory layout:
//!
//! - `train_log.csv`: one row per update; byte-reproducible for a fixed seed
//! - `timing.csv`: wall-clock seconds per update
//! - `eval_log.csv`: deterministic nominal evaluations every `eval_every` updates
//! - `checkpoints/update_XXXXXX.json` and `checkpoints/final.json`
//! - `resolved_config.toml`

pub mod adam;
pub mod gae;
pub mod ppo;
pub mod rollout;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::config::ResolvedRun;
use crate::env::{EnvConfig, ReachEnv, ScenarioKind};
use crate::error::{Error, Result};
use crate::eval::{episode_seed, run_episode, AggregateReport, EpisodeMetrics, PolicyController};
use crate::policy::{ActionMode, InputScaling, Policy};
use crate::rod::RodParams;
use crate::seed;

pub use adam::Adam;
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{
    ppo_loss, ppo_loss_and_grad, ppo_update, LossCoefficients, LossParts, Minibatch, StreamBatch, UpdateStats,
};
pub use rollout::{collect_rollouts, RolloutBuffer};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TIMING_LOG: &str = "timing.csv";
pub const EVAL_LOG: &str = "eval_log.csv";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.json";

/// One training-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub update: usize,
    pub reward_stream: &'static str,
    pub mean_reward: f64,
    pub entropy: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub grad_norm: f64,
    pub clipped_grad_norm: f64,
    pub episodes: usize,
    pub rollout_success_rate: f64,
}

pub const LOG_HEADER: &str = "update,reward_stream,mean_reward,entropy,policy_loss,value_loss,grad_norm,clipped_grad_norm,episodes,rollout_success_rate";

impl LogRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.update,
            self.reward_stream,
            self.mean_reward,
            self.entropy,
            self.policy_loss,
            self.value_loss,
            self.grad_norm,
            self.clipped_grad_norm,
            self.episodes,
            self.rollout_success_rate
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub rows: Vec<LogRow>,
    pub final_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub evaluations: Vec<(usize, AggregateReport)>,
    pub policy: Policy,
}

pub fn scaling_for(rod: &RodParams, env: &EnvConfig) -> InputScaling {
    InputScaling {
        length: rod.length,
        f_max: env.f_max,
    }
}

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(path: PathBuf, preamble: &[String], header: &str) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut csv = Self {
            path,
            out: BufWriter::new(file),
        };
        for line in preamble {
            csv.line(&format!("# {line}"))?;
        }
        csv.line(header)?;
        Ok(csv)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Deterministic nominal episodes with the current weights.
pub fn evaluate_nominal(policy: &Policy, run: &ResolvedRun, episodes: usize, update: usize) -> Result<AggregateReport> {
    let config = run.env.clone().with_scenario(crate::env::ScenarioSpec::Nominal {});
    let controller = PolicyController {
        policy,
        mode: ActionMode::Deterministic,
    };
    let rows = (0..episodes as u64)
        .map(|id| {
            let seed = episode_seed(seed::derive_seed(&[run.train.seed, update as u64]), id);
            let trace = run_episode(&controller, &run.rod, &config, seed, false)?;
            Ok(EpisodeMetrics::from_trace(
                &trace,
                id,
                seed,
                ScenarioKind::Nominal,
                policy.n_sections,
                policy.architecture,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    AggregateReport::from_episodes(&rows, &run.fingerprint())
}

/// Runs the full training loop, writing logs and checkpoints into `out_dir`.
pub fn train(run: &ResolvedRun, out_dir: &Path, mut progress: impl FnMut(&LogRow)) -> Result<TrainSummary> {
    run.validate()?;
    let cfg = &run.train;
    let fingerprint = run.fingerprint();
    let ckpt_dir = out_dir.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;

    let snapshot = format!(
        "# fingerprint={fingerprint}\n{}",
        toml::to_string(run).expect("resolved config serialises")
    );
    let snapshot_path = out_dir.join(RESOLVED_CONFIG);
    std::fs::write(&snapshot_path, snapshot).map_err(|e| Error::io(&snapshot_path, e))?;

    let preamble = vec![
        format!("fingerprint={fingerprint}"),
        format!(
            "architecture={} n_sections={} reward_stream={}",
            run.architecture,
            run.env.n_sections,
            run.architecture.reward_stream()
        ),
    ];
    let mut log = Csv::create(out_dir.join(TRAIN_LOG), &preamble, LOG_HEADER)?;
    let mut timing = Csv::create(out_dir.join(TIMING_LOG), &preamble[..1], "update,wall_clock_s")?;
    let mut eval_log = Csv::create(
        out_dir.join(EVAL_LOG),
        &preamble,
        "update,episodes,success_rate,mean_final_distance,mean_episode_length",
    )?;

    let mut policy = Policy::new(
        run.architecture,
        run.env.n_sections,
        scaling_for(&run.rod, &run.env),
        cfg.network.clone(),
        cfg.seed,
    )?;
    let mut adam = Adam::new(&policy);
    let mut envs = (0..cfg.num_envs)
        .map(|e| {
            let mut env = ReachEnv::new(run.rod.clone(), run.env.clone())?;
            env.reset(seed::derive_seed(&[cfg.seed, seed::tag::ROLLOUT, e as u64]));
            Ok(env)
        })
        .collect::<Result<Vec<_>>>()?;

    let started = Instant::now();
    let mut rows = Vec::with_capacity(cfg.updates);
    let mut periodic: Vec<PathBuf> = Vec::new();
    let mut evaluations = Vec::new();
    for update in 1..=cfg.updates {
        let buffer = collect_rollouts(&policy, &mut envs, cfg.steps_per_env, cfg.gamma, cfg.seed, update)?;
        let stats = ppo_update(&mut policy, &mut adam, &buffer, cfg, update)?;
        let successes = buffer.episodes.iter().filter(|e| e.success).count();
        let row = LogRow {
            update,
            reward_stream: run.architecture.reward_stream(),
            mean_reward: buffer.mean_team_reward(),
            entropy: stats.entropy,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            grad_norm: stats.grad_norm,
            clipped_grad_norm: stats.max_clipped_grad_norm,
            episodes: buffer.episodes.len(),
            rollout_success_rate: if buffer.episodes.is_empty() {
                0.0
            } else {
                successes as f64 / buffer.episodes.len() as f64
            },
        };
        log.line(&row.csv())?;
        timing.line(&format!("{update},{:.3}", started.elapsed().as_secs_f64()))?;
        progress(&row);
        rows.push(row);

        if update % cfg.eval_every == 0 || update == cfg.updates {
            if cfg.eval_episodes > 0 {
                let report = evaluate_nominal(&policy, run, cfg.eval_episodes, update)?;
                eval_log.line(&format!(
                    "{update},{},{},{},{}",
                    report.episodes, report.success_rate, report.mean_final_distance, report.mean_episode_length
                ))?;
                evaluations.push((update, report));
            }
            if update % cfg.eval_every == 0 {
                let path = ckpt_dir.join(format!("update_{update:06}.json"));
                Checkpoint::from_policy(&policy, &run.env, &run.rod, update, &fingerprint).save(&path)?;
                periodic.push(path);
                while periodic.len() > run.io.checkpoint_retention {
                    let old = periodic.remove(0);
                    std::fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
                }
            }
        }
    }
    let final_checkpoint = ckpt_dir.join(FINAL_CHECKPOINT);
    Checkpoint::from_policy(&policy, &run.env, &run.rod, cfg.updates, &fingerprint).save(&final_checkpoint)?;
    Ok(TrainSummary {
        rows,
        final_checkpoint,
        checkpoints: periodic,
        evaluations,
        policy,
    })
}
